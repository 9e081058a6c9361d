//! Leave-one-out cross-validation for the kernel least-squares fit, in
//! closed form and as a brute-force refit oracle, plus hyperparameter grid
//! selection over (sigma, lambda).
//!
//! Hold-out removes the pair (X_l, Y_l) for l up to n /\ m. The closed form
//! expresses all n /\ m leave-one-out coefficient vectors through a single
//! factorization of K11 + (n-1) lambda I, avoiding per-l refits.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimators::{kulsif_fit_direct, RatioModel};
use crate::kernel::{gram_blocks, GramBlocks, KernelSpec};
use crate::linalg::spd_factor;
use crate::points::PointSet;

/// A LOOCV score together with the truncated held-out predictions it was
/// assembled from.
#[derive(Debug, Clone)]
pub struct LoocvBreakdown {
    /// (1/(n /\ m)) ( 1/2 sum_l w_plus(X_l)^2 - sum_l w_plus(Y_l) ).
    pub score: f64,
    /// w_plus^(l)(X_l) for l = 1..n /\ m.
    pub w_x_plus: DVector<f64>,
    /// w_plus^(l)(Y_l) for l = 1..n /\ m.
    pub w_y_plus: DVector<f64>,
}

/// Closed-form LOOCV score of the truncated kernel least-squares estimator.
///
/// With G = (K11 + (n-1) lambda I)^{-1}, E the m x (n /\ m) matrix of ones
/// with a zero diagonal, S = -(1/((m-1) lambda)) K12 E and T the diagonal
/// rescaling T_ll = (GS)_ll / G_ll, the leave-one-out coefficient columns
/// are A = G (S - T) and B = (1/((m-1) lambda)) E; held-out predictions
/// follow by evaluating the representer sums at X_l and Y_l.
pub fn loocv_analytic(g: &GramBlocks, lambda: f64) -> Result<LoocvBreakdown> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let (n, m) = (g.n(), g.m());
    let nm = n.min(m);
    if nm < 2 {
        return Err(Error::invalid(
            "leave-one-out needs at least two pairs (n /\\ m >= 2)",
        ));
    }
    let c = 1.0 / ((m as f64 - 1.0) * lambda);

    let mut reg = g.k11().clone();
    let shift = (n as f64 - 1.0) * lambda;
    for i in 0..n {
        reg[(i, i)] += shift;
    }
    let ginv = spd_factor(&reg)?.inverse();

    let ones_m = DVector::from_element(m, 1.0);
    let kx1 = g.k12() * &ones_m; // row sums of K12
    let ky1 = g.k22() * &ones_m; // row sums of K22

    // S_{il} = -c ((K12 1)_i - K12_{il}), i.e. -c K12 E without forming E
    let mut s = DMatrix::<f64>::zeros(n, nm);
    for l in 0..nm {
        for i in 0..n {
            s[(i, l)] = -c * (kx1[i] - g.k12()[(i, l)]);
        }
    }
    let gs = &ginv * &s;

    // A_{il} = (GS)_{il} - G_{il} (GS)_{ll} / G_{ll}; column l is the
    // leave-one-out alpha with its l-th entry pinned to zero.
    let mut a = gs.clone();
    for l in 0..nm {
        let t_ll = gs[(l, l)] / ginv[(l, l)];
        for i in 0..n {
            a[(i, l)] -= ginv[(i, l)] * t_ll;
        }
    }

    let mut w_x_plus = DVector::<f64>::zeros(nm);
    let mut w_y_plus = DVector::<f64>::zeros(nm);
    for l in 0..nm {
        // w^(l)(X_l) = K11[l, :] A[:, l] + c ((K12 1)_l - K12_{ll})
        let mut wx = c * (kx1[l] - g.k12()[(l, l)]);
        // w^(l)(Y_l) = K21[l, :] A[:, l] + c ((K22 1)_l - K22_{ll})
        let mut wy = c * (ky1[l] - g.k22()[(l, l)]);
        for i in 0..n {
            wx += g.k11()[(l, i)] * a[(i, l)];
            wy += g.k12()[(i, l)] * a[(i, l)];
        }
        w_x_plus[l] = wx.max(0.0);
        w_y_plus[l] = wy.max(0.0);
    }

    let score = (0.5 * w_x_plus.dot(&w_x_plus) - w_y_plus.sum()) / nm as f64;
    Ok(LoocvBreakdown {
        score,
        w_x_plus,
        w_y_plus,
    })
}

/// Brute-force LOOCV: for each held-out pair, rebuild the kernel blocks from
/// the remaining points, refit in closed form, and evaluate at the held-out
/// points. Quadratically slower than the analytic route; this is the oracle
/// it is checked against.
pub fn loocv_naive(x: &PointSet, y: &PointSet, kernel: &KernelSpec, lambda: f64) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            actual: y.dim(),
        });
    }
    let nm = x.len().min(y.len());
    if nm < 2 {
        return Err(Error::invalid(
            "leave-one-out needs at least two pairs (n /\\ m >= 2)",
        ));
    }
    let mut acc = 0.0;
    for l in 0..nm {
        let x_sub = Arc::new(x.remove(l)?);
        let y_sub = Arc::new(y.remove(l)?);
        let blocks = gram_blocks(kernel, &x_sub, &y_sub)?;
        let (alpha, beta) = kulsif_fit_direct(&blocks, lambda)?;
        let model = RatioModel::new(alpha, beta, lambda, *kernel, x_sub, y_sub)?;
        let wx = model.predict_truncated(x.point(l))?;
        let wy = model.predict_truncated(y.point(l))?;
        acc += 0.5 * wx * wx - wy;
    }
    Ok(acc / nm as f64)
}

/// LOOCV scores over a (sigma, lambda) grid with the selected cell.
#[derive(Debug, Clone)]
pub struct GridSelection {
    pub sigma_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    /// scores[(i, j)] is the score at (sigma_grid[i], lambda_grid[j]);
    /// +infinity marks cells whose evaluation failed.
    pub scores: DMatrix<f64>,
    pub best_sigma: f64,
    pub best_lambda: f64,
    pub best_score: f64,
}

/// Evaluates the analytic LOOCV score on every grid cell and picks the
/// minimum. Failing cells score +infinity and are skipped by the selection.
/// Exact ties prefer the larger lambda, then the larger sigma.
pub fn grid_select(
    x: &PointSet,
    y: &PointSet,
    sigma_grid: &[f64],
    lambda_grid: &[f64],
) -> Result<GridSelection> {
    if sigma_grid.is_empty() || lambda_grid.is_empty() {
        return Err(Error::EmptyInput {
            context: "hyperparameter grids must be non-empty",
        });
    }
    for &s in sigma_grid {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::invalid(format!("sigma grid entry {s} invalid")));
        }
    }
    for &l in lambda_grid {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::invalid(format!("lambda grid entry {l} invalid")));
        }
    }

    let mut scores = DMatrix::<f64>::zeros(sigma_grid.len(), lambda_grid.len());
    let mut best: Option<(f64, f64, f64)> = None; // (score, lambda, sigma)
    for (i, &sigma) in sigma_grid.iter().enumerate() {
        let spec = KernelSpec::gaussian(sigma)?;
        let blocks = gram_blocks(&spec, x, y)?;
        for (j, &lambda) in lambda_grid.iter().enumerate() {
            let score = match loocv_analytic(&blocks, lambda) {
                Ok(b) if b.score.is_finite() => b.score,
                _ => f64::INFINITY,
            };
            scores[(i, j)] = score;
            if score.is_finite() {
                let replace = match best {
                    None => true,
                    Some((bs, bl, bsig)) => {
                        score < bs
                            || (score == bs && (lambda > bl || (lambda == bl && sigma > bsig)))
                    }
                };
                if replace {
                    best = Some((score, lambda, sigma));
                }
            }
        }
    }
    let (best_score, best_lambda, best_sigma) = best
        .ok_or_else(|| Error::invalid("every grid cell failed; no hyperparameters selectable"))?;
    Ok(GridSelection {
        sigma_grid: sigma_grid.to_vec(),
        lambda_grid: lambda_grid.to_vec(),
        scores,
        best_sigma,
        best_lambda,
        best_score,
    })
}
