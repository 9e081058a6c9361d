//! The condition-number laboratory: builders for every Hessian variant of
//! the estimator family, random curvature-diagonal laws, spectral checks of
//! the ordering / min-max / probabilistic-band / preconditioning properties,
//! and the two benchmark experiments (condition-number table and BFGS
//! iteration comparison).

mod checks;
mod experiments;

pub use checks::{
    jacobian_symmetry_check, minmax_check, ordering_check, precond_tradeoff, prob_bound_check,
    JacobianSymmetryReport, MinmaxReport, OrderingReport, PrecondReport, ProbBoundConfig,
    ProbBoundReport,
};
pub use experiments::{
    cond_table, iteration_bench, BenchMethod, BenchRun, BenchSummary, BenchTable, CondCell,
    CondExperimentConfig, CondReport, IterationBenchConfig,
};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::psi::PsiKind;

/// Distribution family for random curvature diagonals d_i.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiagonalLaw {
    /// F(d) = 1 - d^{-gamma} on [1, inf).
    Power { gamma: f64 },
    /// F(d) = 1 / (1 + e^{-gamma (d - 1)}) on d >= 0.
    Logistic { gamma: f64 },
    /// Point mass at 1 (the least-squares loss).
    Constant,
}

impl DiagonalLaw {
    /// Inverse-CDF transform of a uniform u in (0, 1). Logistic draws below
    /// zero are clamped to zero (the law lives on d >= 0); the boolean
    /// reports whether clamping occurred.
    pub fn quantile(&self, u: f64) -> (f64, bool) {
        match *self {
            DiagonalLaw::Power { gamma } => (u.powf(-1.0 / gamma), false),
            DiagonalLaw::Logistic { gamma } => {
                let raw = 1.0 + (u / (1.0 - u)).ln() / gamma;
                if raw < 0.0 {
                    (0.0, true)
                } else {
                    (raw, false)
                }
            }
            DiagonalLaw::Constant => (1.0, false),
        }
    }

    /// The distribution function F(d).
    pub fn cdf(&self, d: f64) -> f64 {
        match *self {
            DiagonalLaw::Power { gamma } => {
                if d < 1.0 {
                    0.0
                } else {
                    1.0 - d.powf(-gamma)
                }
            }
            DiagonalLaw::Logistic { gamma } => {
                if d < 0.0 {
                    0.0
                } else {
                    1.0 / (1.0 + (-gamma * (d - 1.0)).exp())
                }
            }
            DiagonalLaw::Constant => {
                if d >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DiagonalLaw::Power { gamma } | DiagonalLaw::Logistic { gamma } => {
                if !(gamma.is_finite() && gamma > 0.0) {
                    return Err(Error::invalid(format!(
                        "gamma must be positive, got {gamma}"
                    )));
                }
            }
            DiagonalLaw::Constant => {}
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match *self {
            DiagonalLaw::Power { gamma } => format!("rnd_power_gamma{gamma}"),
            DiagonalLaw::Logistic { gamma } => format!("rnd_logistic_gamma{gamma}"),
            DiagonalLaw::Constant => "rnd_constant".to_string(),
        }
    }
}

/// Samples an n-vector of diagonal values by inverse-CDF transform of
/// uniforms; returns the vector and the number of clamped draws.
pub fn sample_diagonal(
    law: &DiagonalLaw,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(DVector<f64>, usize)> {
    law.validate()?;
    let mut clamped = 0usize;
    let mut d = DVector::<f64>::zeros(n);
    for i in 0..n {
        let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let (v, was_clamped) = law.quantile(u);
        if was_clamped {
            clamped += 1;
        }
        d[i] = v;
    }
    Ok((d, clamped))
}

/// Which Hessian a builder produces.
#[derive(Debug, Clone, PartialEq)]
pub enum HessianKind {
    /// K11 itself: the loss curvature proxy of the transductive
    /// mean-matching program.
    GramK11,
    /// K11/n + lambda I (reduced least squares).
    RKulsif,
    /// K11^2/n + lambda K11 (kernel least squares).
    Kulsif,
    /// K11^3/n^2 + (2 lambda/n) K11^2 + lambda^2 K11 (inductive mean
    /// matching).
    KmmInductive,
    /// (1/n) K11 D K11 + lambda K11 with D_ii = psi''((psi')^{-1}(w0(X_i)))
    /// evaluated at the true ratio (for the KL loss, D_ii = w0(X_i)^2).
    PsiTrueRatio { psi: PsiKind },
    /// (1/n) K11 D K11 + lambda K11 with D sampled from a diagonal law.
    Rnd { law: DiagonalLaw },
}

impl HessianKind {
    pub fn label(&self) -> String {
        match self {
            HessianKind::GramK11 => "k11".to_string(),
            HessianKind::RKulsif => "rkulsif".to_string(),
            HessianKind::Kulsif => "kulsif".to_string(),
            HessianKind::KmmInductive => "kmm".to_string(),
            HessianKind::PsiTrueRatio { psi } => match psi {
                PsiKind::KullbackLeibler => "kl".to_string(),
                PsiKind::Squared => "psi_squared".to_string(),
                PsiKind::Custom => "psi_custom".to_string(),
            },
            HessianKind::Rnd { law } => law.label(),
        }
    }

    /// Whether the builder needs an externally supplied curvature diagonal.
    pub fn needs_diagonal(&self) -> bool {
        matches!(
            self,
            HessianKind::PsiTrueRatio { .. } | HessianKind::Rnd { .. }
        )
    }
}

/// (1/n) K11 diag(d) K11 + lambda K11, symmetrized.
pub fn hessian_with_diagonal(
    k11: &DMatrix<f64>,
    lambda: f64,
    diag: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = k11.nrows();
    if diag.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: diag.len(),
        });
    }
    if diag.iter().any(|&d| d < 0.0 || !d.is_finite()) {
        return Err(Error::invalid("curvature diagonal must be non-negative"));
    }
    let mut scaled = k11.clone();
    for (j, &d) in diag.iter().enumerate() {
        scaled.column_mut(j).scale_mut(d);
    }
    let h = (scaled * k11) / (n as f64) + lambda * k11;
    Ok(symmetrize(&h))
}

/// Builds the exact Hessian for `kind`. Diagonal-based kinds take their
/// d-vector through `aux` (true-ratio values or sampled law draws);
/// spectrum-only kinds ignore it. The result is symmetrized so it can go
/// straight into spectral analysis.
pub fn hessian_build(
    kind: &HessianKind,
    k11: &DMatrix<f64>,
    lambda: f64,
    aux: Option<&DVector<f64>>,
) -> Result<DMatrix<f64>> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let n = k11.nrows();
    match kind {
        HessianKind::GramK11 => Ok(symmetrize(k11)),
        HessianKind::RKulsif => {
            let mut h = k11 / (n as f64);
            for i in 0..n {
                h[(i, i)] += lambda;
            }
            Ok(symmetrize(&h))
        }
        HessianKind::Kulsif => {
            let h = (k11 * k11) / (n as f64) + lambda * k11;
            Ok(symmetrize(&h))
        }
        HessianKind::KmmInductive => {
            let k2 = k11 * k11;
            let nf = n as f64;
            let h = (&k2 * k11) / (nf * nf) + (2.0 * lambda / nf) * &k2 + (lambda * lambda) * k11;
            Ok(symmetrize(&h))
        }
        HessianKind::PsiTrueRatio { .. } | HessianKind::Rnd { .. } => {
            let diag = aux
                .ok_or_else(|| Error::invalid("this Hessian kind requires a curvature diagonal"))?;
            hessian_with_diagonal(k11, lambda, diag)
        }
    }
}

/// Per-kind curvature diagonal at the true ratio: d_i =
/// psi''((psi')^{-1}(w0(X_i))). For the squared loss this is identically 1;
/// for the KL loss it is w0(X_i)^2.
pub fn psi_true_ratio_diag(psi: PsiKind, w0_values: &DVector<f64>) -> Result<DVector<f64>> {
    match psi {
        PsiKind::Squared => Ok(DVector::from_element(w0_values.len(), 1.0)),
        PsiKind::KullbackLeibler => Ok(w0_values.map(|w| w * w)),
        PsiKind::Custom => Err(Error::invalid(
            "true-ratio diagonal needs an invertible psi'; supply it explicitly",
        )),
    }
}

/// The analytic density ratio w0 = q/p for P = N(0, I_d) and
/// Q = N(mu 1_d, I_d): w0(x) = exp(mu sum_k x_k - d mu^2 / 2).
pub fn true_ratio_gaussian(mu: f64, dim: usize) -> impl Fn(&[f64]) -> f64 + Send + Sync + Copy {
    move |x: &[f64]| {
        let s: f64 = x.iter().sum();
        (mu * s - dim as f64 * mu * mu / 2.0).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gram_matrix, KernelSpec};
    use crate::linalg::spectral_summary;
    use crate::synth::{gaussian_points, substream};
    use approx::assert_relative_eq;

    fn random_k11(seed: u64, n: usize, sigma: f64) -> DMatrix<f64> {
        let pts = gaussian_points(&mut substream(seed, &[0]), n, 4, 0.0);
        gram_matrix(&KernelSpec::gaussian(sigma).unwrap(), &pts)
    }

    #[test]
    fn rkulsif_of_identity_has_unit_cond() {
        let n = 6;
        let k11 = DMatrix::<f64>::identity(n, n);
        let h = hessian_build(&HessianKind::RKulsif, &k11, 0.5, None).unwrap();
        let s = spectral_summary(&h).unwrap();
        assert_relative_eq!(s.cond, 1.0, max_relative = 1e-14);
        assert_relative_eq!(h[(0, 0)], 1.0 / n as f64 + 0.5, max_relative = 1e-15);
    }

    #[test]
    fn kulsif_cond_identity_product() {
        // kappa(K^2/n + lambda K) = kappa(K) kappa(K/n + lambda I)
        for seed in 0..5 {
            let k11 = random_k11(seed, 15, 1.0);
            let lambda = 0.08;
            let h = hessian_build(&HessianKind::Kulsif, &k11, lambda, None).unwrap();
            let hr = hessian_build(&HessianKind::RKulsif, &k11, lambda, None).unwrap();
            let lhs = spectral_summary(&h).unwrap().cond;
            let rhs = spectral_summary(&k11).unwrap().cond * spectral_summary(&hr).unwrap().cond;
            assert_relative_eq!(lhs, rhs, max_relative = 1e-8);
        }
    }

    #[test]
    fn constant_law_reproduces_kulsif_hessian_exactly() {
        let k11 = random_k11(9, 12, 1.2);
        let lambda = 0.3;
        let ones = DVector::from_element(12, 1.0);
        let rnd = hessian_build(
            &HessianKind::Rnd {
                law: DiagonalLaw::Constant,
            },
            &k11,
            lambda,
            Some(&ones),
        )
        .unwrap();
        let kulsif = hessian_build(&HessianKind::Kulsif, &k11, lambda, None).unwrap();
        assert_eq!(rnd, kulsif);
    }

    #[test]
    fn power_quantile_closed_form() {
        let law = DiagonalLaw::Power { gamma: 2.0 };
        let (d, clamped) = law.quantile(0.25);
        assert!(!clamped);
        assert_relative_eq!(d, 2.0, max_relative = 1e-15);
    }

    #[test]
    fn logistic_quantile_median_is_one() {
        let law = DiagonalLaw::Logistic { gamma: 1.0 };
        let (d, clamped) = law.quantile(0.5);
        assert!(!clamped);
        assert_relative_eq!(d, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn power_draws_match_cdf() {
        let law = DiagonalLaw::Power { gamma: 2.0 };
        let mut rng = substream(77, &[1]);
        let (d, _) = sample_diagonal(&law, 100_000, &mut rng).unwrap();
        for &q in &[1.5, 2.0, 4.0] {
            let emp = d.iter().filter(|&&v| v <= q).count() as f64 / d.len() as f64;
            let want = law.cdf(q);
            assert!((emp - want).abs() <= 0.01, "q {q}: emp {emp} vs {want}");
        }
    }

    #[test]
    fn logistic_clamping_reported() {
        // small gamma pushes a visible mass of draws below zero
        let law = DiagonalLaw::Logistic { gamma: 0.2 };
        let mut rng = substream(78, &[1]);
        let (d, clamped) = sample_diagonal(&law, 10_000, &mut rng).unwrap();
        assert!(clamped > 0);
        assert!(d.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn true_ratio_unit_when_distributions_match() {
        let w0 = true_ratio_gaussian(0.0, 10);
        assert_eq!(w0(&[1.0; 10]), 1.0);
    }

    #[test]
    fn true_ratio_is_one_at_midpoint() {
        let mu = 0.7;
        let d = 10;
        let w0 = true_ratio_gaussian(mu, d);
        let x = vec![mu / 2.0; d];
        assert_relative_eq!(w0(&x), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn true_ratio_matches_density_quotient() {
        let mu = 0.5;
        let d = 10;
        let w0 = true_ratio_gaussian(mu, d);
        let mut rng = substream(79, &[2]);
        let pts = gaussian_points(&mut rng, 20, d, 0.0);
        let log_density = |x: &[f64], mean: f64| -> f64 {
            -0.5 * x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        };
        for x in pts.iter_points() {
            let quotient = (log_density(x, mu) - log_density(x, 0.0)).exp();
            assert_relative_eq!(w0(x), quotient, max_relative = 1e-12);
        }
    }

    #[test]
    fn diagonal_kinds_require_aux() {
        let k11 = DMatrix::<f64>::identity(3, 3);
        let err = hessian_build(
            &HessianKind::Rnd {
                law: DiagonalLaw::Constant,
            },
            &k11,
            0.1,
            None,
        );
        assert!(err.is_err());
    }

    #[test]
    fn negative_diagonal_rejected() {
        let k11 = DMatrix::<f64>::identity(3, 3);
        let bad = DVector::from_vec(vec![1.0, -0.5, 2.0]);
        assert!(hessian_with_diagonal(&k11, 0.1, &bad).is_err());
    }
}
