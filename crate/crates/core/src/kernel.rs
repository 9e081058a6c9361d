use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::points::PointSet;

/// Kernel family. Only the Gaussian kernel ships; the enumeration leaves room
/// for future families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[non_exhaustive]
pub enum KernelKind {
    Gaussian,
}

/// A positive-definite kernel with its bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub sigma: f64,
}

impl KernelSpec {
    /// Gaussian kernel k(x, y) = exp(-||x - y||^2 / (2 sigma^2)).
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(KernelSpec {
            kind: KernelKind::Gaussian,
            sigma,
        })
    }
}

fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y.iter())
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}

/// Evaluates the kernel at a pair of points. Symmetric in its arguments; for
/// the Gaussian kernel the value lies in (0, 1].
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    match spec.kind {
        KernelKind::Gaussian => {
            let s2 = 2.0 * spec.sigma * spec.sigma;
            Ok((-squared_distance(x, y) / s2).exp())
        }
    }
}

/// The kernel sub-matrices for a paired sample: K11 over X, K22 over Y and
/// K12 across them. K21 is K12 transposed and is kept implicit.
#[derive(Debug, Clone)]
pub struct GramBlocks {
    k11: DMatrix<f64>,
    k12: DMatrix<f64>,
    k22: DMatrix<f64>,
}

impl GramBlocks {
    /// Assembles blocks from explicit matrices. Intended for synthetic or
    /// degenerate configurations; shapes must be consistent and all entries
    /// finite.
    pub fn from_parts(k11: DMatrix<f64>, k12: DMatrix<f64>, k22: DMatrix<f64>) -> Result<Self> {
        if k11.nrows() != k11.ncols() {
            return Err(Error::DimensionMismatch {
                expected: k11.nrows(),
                actual: k11.ncols(),
            });
        }
        if k22.nrows() != k22.ncols() {
            return Err(Error::DimensionMismatch {
                expected: k22.nrows(),
                actual: k22.ncols(),
            });
        }
        if k12.nrows() != k11.nrows() || k12.ncols() != k22.nrows() {
            return Err(Error::DimensionMismatch {
                expected: k11.nrows(),
                actual: k12.nrows(),
            });
        }
        if k11
            .iter()
            .chain(k12.iter())
            .chain(k22.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite {
                context: "gram blocks",
            });
        }
        Ok(GramBlocks { k11, k12, k22 })
    }

    pub fn n(&self) -> usize {
        self.k11.nrows()
    }

    pub fn m(&self) -> usize {
        self.k22.nrows()
    }

    pub fn k11(&self) -> &DMatrix<f64> {
        &self.k11
    }

    pub fn k12(&self) -> &DMatrix<f64> {
        &self.k12
    }

    pub fn k22(&self) -> &DMatrix<f64> {
        &self.k22
    }
}

/// The square Gram matrix of a single point set. Filled symmetrically from
/// the lower triangle so the result is bitwise symmetric, with exact unit
/// diagonal for the Gaussian kernel.
pub fn gram_matrix(spec: &KernelSpec, pts: &PointSet) -> DMatrix<f64> {
    let n = pts.len();
    let mut k = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = 1.0;
        let pj = pts.point(j);
        for i in (j + 1)..n {
            // unwrap: dimensions agree within one point set
            let v = kernel_eval(spec, pts.point(i), pj).unwrap();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// The rectangular cross Gram matrix, entry (i, j) = k(X_i, Y_j).
pub fn gram_cross(spec: &KernelSpec, x: &PointSet, y: &PointSet) -> Result<DMatrix<f64>> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            actual: y.dim(),
        });
    }
    let (n, m) = (x.len(), y.len());
    let mut k = DMatrix::<f64>::zeros(n, m);
    for j in 0..m {
        let yj = y.point(j);
        for i in 0..n {
            k[(i, j)] = kernel_eval(spec, x.point(i), yj)?;
        }
    }
    Ok(k)
}

/// Builds all three kernel blocks for a paired sample.
pub fn gram_blocks(spec: &KernelSpec, x: &PointSet, y: &PointSet) -> Result<GramBlocks> {
    let k12 = gram_cross(spec, x, y)?;
    Ok(GramBlocks {
        k11: gram_matrix(spec, x),
        k12,
        k22: gram_matrix(spec, y),
    })
}

/// The median of all pairwise distances ||X_i - X_j||, i < j. The usual
/// bandwidth heuristic for Gaussian kernels. An even count of pairs takes the
/// mean of the two central order statistics.
pub fn median_heuristic(x: &PointSet) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::invalid("median heuristic needs at least two points"));
    }
    let n = x.len();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(squared_distance(x.point(i), x.point(j)).sqrt());
        }
    }
    dists.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let len = dists.len();
    let med = if len % 2 == 1 {
        dists[len / 2]
    } else {
        0.5 * (dists[len / 2 - 1] + dists[len / 2])
    };
    if med == 0.0 {
        return Err(Error::DegenerateBandwidth);
    }
    Ok(med)
}
