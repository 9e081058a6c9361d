//! Spectral property checks over the Hessian family: the per-instance
//! condition-number ordering chain, the min-max optimality of the squared
//! loss, probabilistic condition-number bands for random curvature laws,
//! the preconditioning trade-off identity, and the Jacobian-symmetry
//! dichotomy that singles out quadratic losses.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::condlab::{
    hessian_build, hessian_with_diagonal, sample_diagonal, DiagonalLaw, HessianKind,
};
use crate::error::{Error, Result};
use crate::kernel::{gram_matrix, GramBlocks, KernelSpec};
use crate::linalg::{spectral_summary, symmetric_eigen_sorted};
use crate::psi::PsiSpec;
use crate::synth::{gaussian_points, substream, BENCH_DIM};

/// Relative slack absorbing eigensolver round-off in inequality checks.
const ORDER_SLACK: f64 = 1e-9;

/// Condition numbers of the four estimator Hessians built from one K11,
/// with per-inequality flags for the chain
/// kappa(RK) <= kappa(K11) <= kappa(KuLSIF) <= kappa(KMM).
#[derive(Debug, Clone)]
pub struct OrderingReport {
    pub kappa_rkulsif: f64,
    pub kappa_k11: f64,
    pub kappa_kulsif: f64,
    pub kappa_kmm: f64,
    pub flags: [bool; 3],
}

impl OrderingReport {
    pub fn all_hold(&self) -> bool {
        self.flags.iter().all(|&f| f)
    }
}

pub fn ordering_check(k11: &DMatrix<f64>, lambda: f64) -> Result<OrderingReport> {
    let kappa_k11 = spectral_summary(k11)?.cond;
    let kappa_rkulsif =
        spectral_summary(&hessian_build(&HessianKind::RKulsif, k11, lambda, None)?)?.cond;
    let kappa_kulsif =
        spectral_summary(&hessian_build(&HessianKind::Kulsif, k11, lambda, None)?)?.cond;
    let kappa_kmm = spectral_summary(&hessian_build(
        &HessianKind::KmmInductive,
        k11,
        lambda,
        None,
    )?)?
    .cond;
    let le = |a: f64, b: f64| a <= b * (1.0 + ORDER_SLACK);
    Ok(OrderingReport {
        kappa_rkulsif,
        kappa_k11,
        kappa_kulsif,
        kappa_kmm,
        flags: [
            le(kappa_rkulsif, kappa_k11),
            le(kappa_k11, kappa_kulsif),
            le(kappa_kulsif, kappa_kmm),
        ],
    })
}

/// Result of sampling kappa_0(D_{psi,w}) = kappa((1/n) K11 D K11 +
/// lambda K11) over candidate ratio functions w.
#[derive(Debug, Clone)]
pub struct MinmaxReport {
    /// kappa_0(I): the squared-loss condition number, independent of w.
    pub kappa_identity: f64,
    /// kappa_0(D_{psi,w}) per admissible sample.
    pub kappas: Vec<f64>,
    /// (max - min) / max over the sampled kappas.
    pub relative_spread: f64,
    pub sup: f64,
    /// sup >= kappa_0(I) up to round-off slack.
    pub sup_at_least_identity: bool,
    /// Samples rejected because some w(X_i) left the psi domain.
    pub domain_errors: usize,
}

/// Evaluates kappa_0 over `w_samples` (coefficient vectors alpha; w is the
/// representer sum with frozen beta). For the squared loss D = I for every
/// w, so the spread is exactly zero; losses with non-constant psi'' move
/// kappa_0 with w.
pub fn minmax_check(
    g: &GramBlocks,
    lambda: f64,
    psi: &PsiSpec,
    w_samples: &[DVector<f64>],
) -> Result<MinmaxReport> {
    if w_samples.is_empty() {
        return Err(Error::EmptyInput {
            context: "minmax_check needs at least one w sample",
        });
    }
    let n = g.n();
    let b = 1.0 / (g.m() as f64 * lambda);
    let ones_m = DVector::from_element(g.m(), 1.0);
    let kx1 = g.k12() * &ones_m;

    let identity_diag = DVector::from_element(n, 1.0);
    let kappa_identity =
        spectral_summary(&hessian_with_diagonal(g.k11(), lambda, &identity_diag)?)?.cond;

    let mut kappas = Vec::with_capacity(w_samples.len());
    let mut domain_errors = 0usize;
    for alpha in w_samples {
        if alpha.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: alpha.len(),
            });
        }
        let w = g.k11() * alpha + b * &kx1;
        if w.iter().any(|&v| !psi.in_domain(v)) {
            domain_errors += 1;
            continue;
        }
        let diag = w.map(|v| psi.double_prime(v));
        let h = hessian_with_diagonal(g.k11(), lambda, &diag)?;
        kappas.push(spectral_summary(&h)?.cond);
    }
    if kappas.is_empty() {
        return Err(Error::invalid(
            "every w sample violated the psi domain; nothing to compare",
        ));
    }
    let max = kappas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = kappas.iter().cloned().fold(f64::INFINITY, f64::min);
    let relative_spread = if max > 0.0 { (max - min) / max } else { 0.0 };
    Ok(MinmaxReport {
        kappa_identity,
        sup: max,
        relative_spread,
        sup_at_least_identity: max >= kappa_identity * (1.0 - ORDER_SLACK),
        kappas,
        domain_errors,
    })
}

/// Configuration of a probabilistic-band experiment: per run, draw n points
/// of N(0, I_dim), build K11, sample a curvature diagonal from the law and
/// test whether kappa(H_w) falls inside the law's asymptotic band.
#[derive(Debug, Clone)]
pub struct ProbBoundConfig {
    pub n: usize,
    pub dim: usize,
    pub sigma: f64,
    /// None resolves to the schedule 1/n^0.9.
    pub lambda: Option<f64>,
    pub runs: usize,
    pub seed: u64,
}

impl Default for ProbBoundConfig {
    fn default() -> Self {
        ProbBoundConfig {
            n: 200,
            dim: BENCH_DIM,
            sigma: 2.0,
            lambda: None,
            runs: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbBoundReport {
    pub runs: usize,
    pub passed: usize,
    pub pass_rate: f64,
    /// Fraction of diagonal draws clamped at zero (logistic law only).
    pub clamped_fraction: f64,
}

/// The instantiated condition-number band for a diagonal law at sample size
/// n: the power law n^{(1-eta)(1-nu)/gamma} <= kappa(H_w) <=
/// kappa(K11)(1 + lambda^{-1} n^{(1+eta)/gamma}); the logistic law
/// ((1-eta)/gamma log(n/2))^{1-nu} <= kappa(H_w) <=
/// kappa(K11) (1+eta)/(lambda gamma) log n; the constant law keeps only the
/// upper bound kappa(K11)(1 + 1/lambda).
fn band(law: &DiagonalLaw, n: usize, lambda: f64, kappa_k11: f64, eta: f64, nu: f64) -> (f64, f64) {
    let nf = n as f64;
    match *law {
        DiagonalLaw::Power { gamma } => {
            let lower = nf.powf((1.0 - eta) * (1.0 - nu) / gamma);
            let upper = kappa_k11 * (1.0 + nf.powf((1.0 + eta) / gamma) / lambda);
            (lower, upper)
        }
        DiagonalLaw::Logistic { gamma } => {
            let lower = ((1.0 - eta) / gamma * (nf / 2.0).ln())
                .max(0.0)
                .powf(1.0 - nu);
            let upper = kappa_k11 * (1.0 + eta) / (lambda * gamma) * nf.ln();
            (lower, upper)
        }
        DiagonalLaw::Constant => (1.0, kappa_k11 * (1.0 + 1.0 / lambda)),
    }
}

/// Runs the band experiment and reports the fraction of runs whose
/// kappa(H_w) landed inside [lower, upper].
pub fn prob_bound_check(
    cfg: &ProbBoundConfig,
    law: &DiagonalLaw,
    eta: f64,
    nu: f64,
) -> Result<ProbBoundReport> {
    law.validate()?;
    if !(0.0 < eta && eta < 0.5 && 0.0 < nu && nu < 0.5) {
        return Err(Error::invalid("eta and nu must lie in (0, 0.5)"));
    }
    if cfg.runs == 0 {
        return Err(Error::invalid("runs must be positive"));
    }
    let spec = KernelSpec::gaussian(cfg.sigma)?;
    let lambda = cfg.lambda.unwrap_or_else(|| (cfg.n as f64).powf(-0.9));

    let mut passed = 0usize;
    let mut clamped_total = 0usize;
    for run in 0..cfg.runs {
        let mut rng_x = substream(cfg.seed, &[0xB0, run as u64, 0]);
        let mut rng_d = substream(cfg.seed, &[0xB0, run as u64, 1]);
        let x = gaussian_points(&mut rng_x, cfg.n, cfg.dim, 0.0);
        let k11 = gram_matrix(&spec, &x);
        let kappa_k11 = spectral_summary(&k11)?.cond;
        let (diag, clamped) = sample_diagonal(law, cfg.n, &mut rng_d)?;
        clamped_total += clamped;
        let h = hessian_with_diagonal(&k11, lambda, &diag)?;
        let kappa = spectral_summary(&h)?.cond;
        let (lower, upper) = band(law, cfg.n, lambda, kappa_k11, eta, nu);
        if kappa.is_finite() && lower <= kappa && kappa <= upper {
            passed += 1;
        }
    }
    Ok(ProbBoundReport {
        runs: cfg.runs,
        passed,
        pass_rate: passed as f64 / cfg.runs as f64,
        clamped_fraction: clamped_total as f64 / (cfg.runs * cfg.n) as f64,
    })
}

/// Outcome of the preconditioning trade-off search on one SPD matrix.
#[derive(Debug, Clone)]
pub struct PrecondReport {
    /// max{kappa(A)/C, 1}: the attainable optimum over preconditioners S
    /// with kappa(S) <= C.
    pub analytic: f64,
    /// kappa(S^{-1/2} A S^{-1/2}) achieved by the explicit eigenbasis
    /// construction.
    pub constructed: f64,
    /// Best value over the construction and the random eigenbasis search.
    pub searched: f64,
}

/// Explores min_{S : kappa(S) <= C} kappa(S^{-1/2} A S^{-1/2}).
///
/// Writing T = S^{-1/2} (so kappa(T) <= sqrt(C)) and working in the
/// eigenbasis of A with eigenvalues l_1 >= ... >= l_n, the optimum is
/// attained by a diagonal T with g_1 = 1, g_n = sqrt(C) and interior g_k
/// inside [max{1, sqrt(C) sqrt(l_n/l_k)}, min{sqrt(C), sqrt(l_1/l_k)}]
/// whenever kappa(A) > C, and by T = A^{-1/2} otherwise. The constructed
/// value is computed honestly by forming T A T and re-decomposing;
/// `trials` random diagonal-in-eigenbasis preconditioners bound the search
/// from the side.
pub fn precond_tradeoff(
    a: &DMatrix<f64>,
    c_bound: f64,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PrecondReport> {
    if !(c_bound >= 1.0 && c_bound.is_finite()) {
        return Err(Error::invalid("the preconditioner bound C must be >= 1"));
    }
    let (vals, vecs) = symmetric_eigen_sorted(a)?;
    let n = vals.len();
    if vals[n - 1] <= 0.0 {
        return Err(Error::invalid(
            "precond_tradeoff requires a positive definite matrix",
        ));
    }
    let kappa = vals[0] / vals[n - 1];
    let analytic = (kappa / c_bound).max(1.0);
    let c_half = c_bound.sqrt();

    // Explicit construction in the eigenbasis.
    let gammas: Vec<f64> = if kappa <= c_bound {
        // T = A^{-1/2} is feasible and reaches kappa = 1.
        vals.iter().map(|&l| 1.0 / l.sqrt()).collect()
    } else {
        (0..n)
            .map(|k| {
                if k == 0 {
                    1.0
                } else if k == n - 1 {
                    c_half
                } else {
                    let lo = (c_half * (vals[n - 1] / vals[k]).sqrt()).max(1.0);
                    let hi = c_half.min((vals[0] / vals[k]).sqrt());
                    (vals[0] / vals[k]).sqrt().clamp(lo, hi)
                }
            })
            .collect()
    };
    let t = &vecs * DMatrix::from_diagonal(&DVector::from_vec(gammas.clone())) * vecs.transpose();
    let preconditioned = &t * a * &t;
    let constructed = spectral_summary(&preconditioned)?.cond;

    // Random search over diagonal-in-eigenbasis preconditioners with
    // kappa(T) <= sqrt(C); conjugation by the eigenvector matrix cancels,
    // so kappa(T A T) = kappa(diag(g_k^2 l_k)).
    let mut searched = constructed;
    for _ in 0..trials {
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for k in 0..n {
            let g: f64 = if c_half > 1.0 {
                // log-uniform over [1, sqrt(C)]
                (rng.random_range(0.0..1.0) * c_half.ln()).exp()
            } else {
                1.0
            };
            let v = g * g * vals[k];
            hi = hi.max(v);
            lo = lo.min(v);
        }
        searched = searched.min(hi / lo);
    }
    Ok(PrecondReport {
        analytic,
        constructed,
        searched,
    })
}

/// Relative asymmetry of the transformed Jacobian at each supplied alpha.
#[derive(Debug, Clone)]
pub struct JacobianSymmetryReport {
    /// ||M - M^T||_F / ||M||_F per alpha, with M = (1/n) D K11 + lambda I.
    pub asymmetry: Vec<f64>,
}

/// Probes whether the gradient field of the loss stays integrable after
/// multiplication by K11^{-1}: the transformed Jacobian
/// M(alpha) = (1/n) D_{psi,alpha} K11 + lambda I is symmetric for every
/// alpha exactly when psi'' is constant. Quadratic losses therefore show
/// asymmetry at round-off level, while e.g. the KL loss is generically
/// asymmetric.
pub fn jacobian_symmetry_check(
    g: &GramBlocks,
    lambda: f64,
    psi: &PsiSpec,
    alphas: &[DVector<f64>],
) -> Result<JacobianSymmetryReport> {
    if alphas.is_empty() {
        return Err(Error::EmptyInput {
            context: "jacobian_symmetry_check needs at least one alpha",
        });
    }
    let n = g.n();
    let b = 1.0 / (g.m() as f64 * lambda);
    let ones_m = DVector::from_element(g.m(), 1.0);
    let kx1 = g.k12() * &ones_m;

    let mut asymmetry = Vec::with_capacity(alphas.len());
    for alpha in alphas {
        if alpha.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: alpha.len(),
            });
        }
        let w = g.k11() * alpha + b * &kx1;
        for (i, &v) in w.iter().enumerate() {
            if !psi.in_domain(v) {
                return Err(Error::PsiDomain {
                    side: crate::error::SampleSide::X,
                    index: i,
                    value: v,
                });
            }
        }
        // M = (1/n) D K11 + lambda I: scale row i of K11 by psi''(w_i)
        let mut m = g.k11().clone();
        for (i, &v) in w.iter().enumerate() {
            let d = psi.double_prime(v) / n as f64;
            for j in 0..n {
                m[(i, j)] *= d;
            }
        }
        for i in 0..n {
            m[(i, i)] += lambda;
        }
        let asym = (&m - m.transpose()).norm() / m.norm();
        asymmetry.push(asym);
    }
    Ok(JacobianSymmetryReport { asymmetry })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::gram_blocks;
    use crate::linalg::solve_spd;
    use crate::psi::PsiSpec;
    use crate::synth::gen_pair;
    use approx::assert_relative_eq;

    fn blocks(seed: u64, n: usize, m: usize, sigma: f64) -> GramBlocks {
        let (x, y) = gen_pair(seed, 4, n, m, 0.5);
        gram_blocks(&KernelSpec::gaussian(sigma).unwrap(), &x, &y).unwrap()
    }

    /// alpha giving w(X_i) = targets exactly (K11 must be nonsingular).
    fn alpha_for_targets(g: &GramBlocks, lambda: f64, targets: &DVector<f64>) -> DVector<f64> {
        let b = 1.0 / (g.m() as f64 * lambda);
        let ones = DVector::from_element(g.m(), 1.0);
        let kx1 = g.k12() * &ones;
        solve_spd(g.k11(), &(targets - b * &kx1)).unwrap()
    }

    #[test]
    fn ordering_chain_holds_on_random_instances() {
        for seed in 0..20 {
            let g = blocks(seed, 20, 20, 1.5);
            let rep = ordering_check(g.k11(), 0.05).unwrap();
            assert!(rep.all_hold(), "{rep:?}");
        }
    }

    #[test]
    fn ordering_chain_identity_degenerates_to_ones() {
        let k11 = DMatrix::<f64>::identity(8, 8);
        let rep = ordering_check(&k11, 0.2).unwrap();
        assert!(rep.all_hold());
        for v in [
            rep.kappa_rkulsif,
            rep.kappa_k11,
            rep.kappa_kulsif,
            rep.kappa_kmm,
        ] {
            assert_relative_eq!(v, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn minmax_squared_has_zero_spread() {
        let g = blocks(60, 12, 12, 1.2);
        let mut rng = substream(61, &[0]);
        let samples: Vec<DVector<f64>> = (0..20)
            .map(|_| DVector::from_fn(12, |_, _| rng.random_range(-2.0..2.0)))
            .collect();
        let rep = minmax_check(&g, 0.1, &PsiSpec::squared(), &samples).unwrap();
        assert_eq!(rep.relative_spread, 0.0);
        assert_eq!(rep.domain_errors, 0);
    }

    #[test]
    fn minmax_kl_near_constant_w_close_to_identity() {
        let g = blocks(62, 12, 12, 1.2);
        let lambda = 0.1;
        let mut rng = substream(63, &[0]);
        let samples: Vec<DVector<f64>> = (0..10)
            .map(|_| {
                let targets =
                    DVector::from_fn(12, |_, _| -1.0 + 0.001 * rng.random_range(-1.0..1.0));
                alpha_for_targets(&g, lambda, &targets)
            })
            .collect();
        let rep = minmax_check(&g, lambda, &PsiSpec::kullback_leibler(), &samples).unwrap();
        for k in &rep.kappas {
            let rel = (k - rep.kappa_identity).abs() / rep.kappa_identity;
            assert!(rel <= 0.05, "kappa {k} vs identity {}", rep.kappa_identity);
        }
    }

    #[test]
    fn minmax_kl_spread_w_exceeds_identity() {
        let mut hits = 0;
        for seed in 0..20 {
            let g = blocks(64 + seed, 12, 12, 1.2);
            let lambda = 0.1;
            let mut rng = substream(100 + seed, &[0]);
            let samples: Vec<DVector<f64>> = (0..20)
                .map(|_| {
                    let targets =
                        DVector::from_fn(12, |_, _| -(rng.random_range(-1.5..1.5f64)).exp());
                    alpha_for_targets(&g, lambda, &targets)
                })
                .collect();
            let rep = minmax_check(&g, lambda, &PsiSpec::kullback_leibler(), &samples).unwrap();
            if rep.sup_at_least_identity {
                hits += 1;
            }
        }
        assert!(hits >= 18, "sup >= identity in only {hits}/20 instances");
    }

    #[test]
    fn prob_band_constant_law_upper_bound_always_holds() {
        let cfg = ProbBoundConfig {
            n: 60,
            runs: 20,
            seed: 5,
            ..ProbBoundConfig::default()
        };
        let rep = prob_bound_check(&cfg, &DiagonalLaw::Constant, 0.1, 0.1).unwrap();
        assert_eq!(rep.passed, rep.runs);
    }

    #[test]
    fn precond_analytic_when_kappa_exceeds_bound() {
        // diag(100, 30, 9, 1) rotated: kappa = 100, C = 10 -> analytic 10
        let mut rng = substream(70, &[0]);
        let m = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let q = m.qr().q();
        let a = &q
            * DMatrix::from_diagonal(&DVector::from_vec(vec![100.0, 30.0, 9.0, 1.0]))
            * q.transpose();
        let rep = precond_tradeoff(&a, 10.0, 1000, &mut rng).unwrap();
        assert_relative_eq!(rep.analytic, 10.0, max_relative = 1e-10);
        assert!((rep.constructed - rep.analytic).abs() <= 1e-6 * rep.analytic);
        assert!(rep.searched >= rep.analytic - 1e-9);
    }

    #[test]
    fn precond_feasible_bound_reaches_one() {
        let mut rng = substream(71, &[0]);
        let m = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let q = m.qr().q();
        let a = &q
            * DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 2.0, 1.5, 1.0]))
            * q.transpose();
        let rep = precond_tradeoff(&a, 10.0, 500, &mut rng).unwrap();
        assert_relative_eq!(rep.analytic, 1.0, max_relative = 1e-12);
        assert!((rep.constructed - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn precond_rejects_non_spd() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -2.0]));
        let mut rng = substream(72, &[0]);
        assert!(precond_tradeoff(&a, 5.0, 10, &mut rng).is_err());
    }

    #[test]
    fn jacobian_squared_loss_symmetric_to_round_off() {
        let g = blocks(73, 10, 10, 1.2);
        let mut rng = substream(74, &[0]);
        let alphas: Vec<DVector<f64>> = (0..5)
            .map(|_| DVector::from_fn(10, |_, _| rng.random_range(-2.0..2.0)))
            .collect();
        let rep = jacobian_symmetry_check(&g, 0.2, &PsiSpec::squared(), &alphas).unwrap();
        for a in rep.asymmetry {
            assert!(a <= 1e-14, "asymmetry {a}");
        }
    }

    #[test]
    fn jacobian_kl_constant_w_is_symmetric() {
        let g = blocks(75, 10, 10, 1.2);
        let lambda = 0.15;
        let alpha = alpha_for_targets(&g, lambda, &DVector::from_element(10, -1.3));
        let rep =
            jacobian_symmetry_check(&g, lambda, &PsiSpec::kullback_leibler(), &[alpha]).unwrap();
        assert!(rep.asymmetry[0] <= 1e-12, "asymmetry {}", rep.asymmetry[0]);
    }

    #[test]
    fn jacobian_kl_generic_w_is_asymmetric() {
        let g = blocks(76, 10, 10, 1.2);
        let lambda = 0.15;
        let mut rng = substream(77, &[0]);
        let alphas: Vec<DVector<f64>> = (0..10)
            .map(|_| {
                let targets = DVector::from_fn(10, |_, _| -(rng.random_range(-1.0..1.0f64)).exp());
                alpha_for_targets(&g, lambda, &targets)
            })
            .collect();
        let rep =
            jacobian_symmetry_check(&g, lambda, &PsiSpec::kullback_leibler(), &alphas).unwrap();
        let hits = rep.asymmetry.iter().filter(|&&a| a > 1e-6).count();
        assert!(hits >= 9, "only {hits}/10 asymmetric");
    }
}
