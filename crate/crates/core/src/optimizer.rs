//! A quasi-Newton (BFGS) minimizer with full iteration tracing, plus a
//! central-difference gradient checker.
//!
//! The trace records enough to compare iteration counts across objectives
//! with different Hessian conditioning; orderings of those counts, not
//! absolute values, are the meaningful quantity.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimators::Objective;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineSearch {
    ArmijoBacktracking,
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Stop when the infinity norm of the gradient drops to this level.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub line_search: LineSearch,
    /// Sufficient-decrease constant of the Armijo condition.
    pub armijo_c1: f64,
    /// Step shrink factor per backtrack.
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            grad_tol: 1e-5,
            max_iter: 10_000,
            line_search: LineSearch::ArmijoBacktracking,
            armijo_c1: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 60,
        }
    }
}

impl OptimizerConfig {
    /// Default settings with a different gradient tolerance.
    pub fn with_grad_tol(grad_tol: f64) -> Self {
        OptimizerConfig {
            grad_tol,
            ..OptimizerConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0 && self.grad_tol.is_finite()) {
            return Err(Error::invalid("grad_tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        if !(self.armijo_c1 > 0.0 && self.armijo_c1 < 1.0) {
            return Err(Error::invalid("armijo_c1 must lie in (0, 1)"));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::invalid("backtrack_factor must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Outcome of a minimization run.
#[derive(Debug, Clone)]
pub struct OptimizationTrace {
    /// Outer BFGS iterations performed.
    pub iterations: usize,
    /// Objective evaluations, including line-search probes.
    pub function_evals: usize,
    pub final_point: DVector<f64>,
    pub final_value: f64,
    /// Infinity norm of the gradient at the final point.
    pub final_grad_norm: f64,
    /// True iff final_grad_norm <= grad_tol.
    pub converged: bool,
    /// Accepted objective value per iteration (monotone non-increasing).
    pub objective_curve: Vec<f64>,
    pub wall_time: f64,
}

/// Evaluates the objective, mapping domain violations to +infinity so the
/// line search backs off instead of stepping outside the feasible region.
fn probe_value(obj: &dyn Objective, x: &DVector<f64>, evals: &mut usize) -> Result<f64> {
    *evals += 1;
    match obj.value(x) {
        Ok(v) if v.is_nan() => Ok(f64::INFINITY),
        Ok(v) => Ok(v),
        Err(Error::PsiDomain { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Minimizes `obj` from `x0` by BFGS with an inverse-Hessian update
/// (identity start) and Armijo backtracking.
///
/// Curvature pairs with s^T y <= 1e-12 ||s|| ||y|| skip the update. A failed
/// line search resets the inverse Hessian to the identity and retries once
/// with the steepest-descent direction before giving up. Exceeding max_iter
/// returns a trace with `converged == false` rather than an error.
///
/// The run also stops (again with `converged == false`) once several
/// consecutive accepted steps fail to decrease the objective beyond a
/// relative epsilon: a monotone line search cannot recover after the
/// objective stops moving in finite precision, which happens when a domain
/// wall blocks the descent direction.
pub fn bfgs_minimize(
    obj: &dyn Objective,
    x0: &DVector<f64>,
    cfg: &OptimizerConfig,
) -> Result<OptimizationTrace> {
    cfg.validate()?;
    if x0.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            actual: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InfeasibleStart);
    }
    let start = Instant::now();
    let n = x0.len();

    let mut evals = 0usize;
    let mut f = match probe_value(obj, x0, &mut evals)? {
        v if v.is_finite() => v,
        _ => return Err(Error::InfeasibleStart),
    };
    let mut x = x0.clone();
    let mut g = obj.gradient(&x)?;
    let mut h_inv = DMatrix::<f64>::identity(n, n);

    let mut iterations = 0usize;
    let mut curve = vec![f];
    let mut converged = g.amax() <= cfg.grad_tol;
    let mut stalled_steps = 0usize;
    const STALL_PATIENCE: usize = 5;

    while !converged && iterations < cfg.max_iter {
        iterations += 1;

        // Direction, line search, and a single identity-reset retry.
        let mut accepted: Option<(f64, DVector<f64>, f64, DVector<f64>)> = None;
        for attempt in 0..2 {
            let d = if attempt == 0 {
                let d = -(&h_inv * &g);
                if d.dot(&g) < 0.0 && d.iter().all(|v| v.is_finite()) {
                    d
                } else {
                    // not a descent direction; fall back immediately
                    h_inv = DMatrix::identity(n, n);
                    -g.clone()
                }
            } else {
                h_inv = DMatrix::identity(n, n);
                -g.clone()
            };
            let slope = g.dot(&d);

            let mut t = 1.0;
            for _ in 0..=cfg.max_backtracks {
                let x_new = &x + t * &d;
                let f_new = probe_value(obj, &x_new, &mut evals)?;
                if f_new <= f + cfg.armijo_c1 * t * slope {
                    let s = t * &d;
                    accepted = Some((f_new, x_new, t, s));
                    break;
                }
                t *= cfg.backtrack_factor;
            }
            if accepted.is_some() {
                break;
            }
        }

        let Some((f_new, x_new, _t, s)) = accepted else {
            // Line search stalled even along steepest descent: the gradient
            // is at its numerical floor. Stop with the current iterate.
            break;
        };

        if f - f_new <= 1e-15 * (1.0 + f.abs()) {
            stalled_steps += 1;
        } else {
            stalled_steps = 0;
        }

        let g_new = obj.gradient(&x_new)?;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            // H <- (I - s y^T / sy) H (I - y s^T / sy) + s s^T / sy
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            let c1 = (sy + yhy) / (sy * sy);
            // rank-two correction
            h_inv.ger(c1, &s, &s, 1.0);
            h_inv.ger(-1.0 / sy, &hy, &s, 1.0);
            h_inv.ger(-1.0 / sy, &s, &hy, 1.0);
        }

        x = x_new;
        f = f_new;
        g = g_new;
        curve.push(f);
        converged = g.amax() <= cfg.grad_tol;
        if stalled_steps >= STALL_PATIENCE {
            break;
        }
    }

    Ok(OptimizationTrace {
        iterations,
        function_evals: evals,
        final_value: f,
        final_grad_norm: g.amax(),
        final_point: x,
        converged,
        objective_curve: curve,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Compares analytic gradients against central finite differences with per
/// coordinate step `step * (1 + |x_i|)`; returns the maximum over all points
/// and coordinates of |fd - grad| / max(||grad||_inf, 1e-12).
///
/// Probes that leave the loss domain are skipped and counted; if every probe
/// is infeasible the check fails.
pub fn grad_check(obj: &dyn Objective, points: &[DVector<f64>], step: f64) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyInput {
            context: "grad_check needs at least one point",
        });
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("step must be positive"));
    }
    let mut max_err = 0.0f64;
    let mut evaluated = 0usize;
    let mut skipped = 0usize;

    for p in points {
        let g = obj.gradient(p)?;
        let denom = g.amax().max(1e-12);
        for i in 0..p.len() {
            let h = step * (1.0 + p[i].abs());
            let mut plus = p.clone();
            plus[i] += h;
            let mut minus = p.clone();
            minus[i] -= h;
            let f_plus = match obj.value(&plus) {
                Ok(v) => v,
                Err(Error::PsiDomain { .. }) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let f_minus = match obj.value(&minus) {
                Ok(v) => v,
                Err(Error::PsiDomain { .. }) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let fd = (f_plus - f_minus) / (2.0 * h);
            max_err = max_err.max((fd - g[i]).abs() / denom);
            evaluated += 1;
        }
    }
    if evaluated == 0 && skipped > 0 {
        return Err(Error::AllProbesInfeasible);
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{
        kl_feasible_start, kulsif_fit_direct, MestObjective, ObjectiveKind, RkulsifObjective,
    };
    use crate::kernel::{gram_blocks, KernelSpec};
    use crate::psi::PsiSpec;
    use crate::synth::gen_pair;
    use std::sync::Arc;

    /// Test-only objective from closures.
    struct FnObjective<V, G> {
        dim: usize,
        value: V,
        grad: G,
    }

    impl<V, G> Objective for FnObjective<V, G>
    where
        V: Fn(&DVector<f64>) -> f64 + Send + Sync,
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
    {
        fn dim(&self) -> usize {
            self.dim
        }
        fn kind(&self) -> ObjectiveKind {
            ObjectiveKind::RKulsif // irrelevant for tests
        }
        fn value(&self, alpha: &DVector<f64>) -> Result<f64> {
            Ok((self.value)(alpha))
        }
        fn gradient(&self, alpha: &DVector<f64>) -> Result<DVector<f64>> {
            Ok((self.grad)(alpha))
        }
    }

    #[test]
    fn quadratic_bowl_converges_quickly() {
        let obj = FnObjective {
            dim: 2,
            value: |x: &DVector<f64>| 0.5 * x.dot(x),
            grad: |x: &DVector<f64>| x.clone(),
        };
        let trace = bfgs_minimize(
            &obj,
            &DVector::from_vec(vec![5.0, 5.0]),
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!(trace.converged);
        assert!(trace.iterations <= 20, "iterations {}", trace.iterations);
        assert!(trace.final_grad_norm <= 1e-5);
        assert!(trace.final_point.amax() <= 1e-4);
    }

    #[test]
    fn rosenbrock_reaches_global_minimum() {
        let obj = FnObjective {
            dim: 2,
            value: |x: &DVector<f64>| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            grad: |x: &DVector<f64>| {
                DVector::from_vec(vec![
                    -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                    200.0 * (x[1] - x[0] * x[0]),
                ])
            },
        };
        let cfg = OptimizerConfig::with_grad_tol(1e-7);
        let trace = bfgs_minimize(&obj, &DVector::from_vec(vec![-1.2, 1.0]), &cfg).unwrap();
        assert!(trace.converged);
        assert!((trace.final_point[0] - 1.0).abs() <= 1e-4);
        assert!((trace.final_point[1] - 1.0).abs() <= 1e-4);
    }

    #[test]
    fn objective_curve_is_monotone() {
        let obj = FnObjective {
            dim: 2,
            value: |x: &DVector<f64>| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            grad: |x: &DVector<f64>| {
                DVector::from_vec(vec![
                    -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                    200.0 * (x[1] - x[0] * x[0]),
                ])
            },
        };
        let trace = bfgs_minimize(
            &obj,
            &DVector::from_vec(vec![-1.2, 1.0]),
            &OptimizerConfig::default(),
        )
        .unwrap();
        for w in trace.objective_curve.windows(2) {
            assert!(w[1] <= w[0], "objective increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn max_iter_exceeded_returns_unconverged_trace() {
        let obj = FnObjective {
            dim: 2,
            value: |x: &DVector<f64>| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            grad: |x: &DVector<f64>| {
                DVector::from_vec(vec![
                    -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                    200.0 * (x[1] - x[0] * x[0]),
                ])
            },
        };
        let cfg = OptimizerConfig {
            max_iter: 2,
            ..OptimizerConfig::default()
        };
        let trace = bfgs_minimize(&obj, &DVector::from_vec(vec![-1.2, 1.0]), &cfg).unwrap();
        assert!(!trace.converged);
        assert_eq!(trace.iterations, 2);
    }

    #[test]
    fn rkulsif_minimizer_matches_closed_form() {
        let (x, y) = gen_pair(40, 3, 50, 50, 0.4);
        let spec = KernelSpec::gaussian(1.2).unwrap();
        let g = Arc::new(gram_blocks(&spec, &x, &y).unwrap());
        let lambda = 0.2;
        let (alpha_direct, _) = kulsif_fit_direct(&g, lambda).unwrap();
        let obj = RkulsifObjective::new(g, lambda).unwrap();
        let cfg = OptimizerConfig::with_grad_tol(1e-8);
        let trace = bfgs_minimize(&obj, &DVector::zeros(50), &cfg).unwrap();
        assert!(trace.converged);
        let diff = (&trace.final_point - &alpha_direct).amax();
        assert!(diff <= 1e-4, "diff {diff}");
    }

    #[test]
    fn infeasible_start_is_input_error() {
        let (x, y) = gen_pair(41, 3, 8, 8, 0.4);
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let g = Arc::new(gram_blocks(&spec, &x, &y).unwrap());
        let obj = MestObjective::new(g, 0.2, PsiSpec::kullback_leibler()).unwrap();
        // alpha = 0 is outside the KL domain
        let err = bfgs_minimize(&obj, &DVector::zeros(8), &OptimizerConfig::default());
        assert!(matches!(err.unwrap_err(), Error::InfeasibleStart));
    }

    #[test]
    fn kl_stays_feasible_through_line_search() {
        // with Y = X the dual values at Y mirror those at X, so the optimum
        // is interior and the run converges in gradient norm
        let (x, _) = gen_pair(42, 3, 12, 12, 0.0);
        let y = x.clone();
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let g = Arc::new(gram_blocks(&spec, &x, &y).unwrap());
        let lambda = 0.15;
        let alpha0 = kl_feasible_start(&g, lambda).unwrap();
        let obj = MestObjective::new(g, lambda, PsiSpec::kullback_leibler()).unwrap();
        let trace = bfgs_minimize(&obj, &alpha0, &OptimizerConfig::default()).unwrap();
        assert!(trace.converged, "grad {}", trace.final_grad_norm);
        // the accepted iterate must be feasible
        assert!(obj.value(&trace.final_point).is_ok());
    }

    #[test]
    fn kl_blocked_by_domain_wall_stalls_without_converging() {
        // a shifted sample can pin the constrained optimum against the
        // w(Y_j) < 0 wall; the trace must terminate promptly and stay
        // monotone and feasible rather than spin until max_iter
        let (x, y) = gen_pair(42, 3, 12, 12, 0.4);
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let g = Arc::new(gram_blocks(&spec, &x, &y).unwrap());
        let lambda = 0.15;
        let alpha0 = kl_feasible_start(&g, lambda).unwrap();
        let obj = MestObjective::new(g, lambda, PsiSpec::kullback_leibler()).unwrap();
        let trace = bfgs_minimize(&obj, &alpha0, &OptimizerConfig::default()).unwrap();
        assert!(!trace.converged);
        assert!(trace.iterations < 2000, "iterations {}", trace.iterations);
        assert!(obj.value(&trace.final_point).is_ok());
        for w in trace.objective_curve.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn grad_check_exact_for_linear_objective() {
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let b2 = b.clone();
        let obj = FnObjective {
            dim: 3,
            value: move |x: &DVector<f64>| b.dot(x),
            grad: move |_: &DVector<f64>| b2.clone(),
        };
        let pts = vec![DVector::zeros(3), DVector::from_vec(vec![1.0, 2.0, 3.0])];
        let err = grad_check(&obj, &pts, 1e-5).unwrap();
        assert!(err <= 1e-10, "err {err}");
    }

    #[test]
    fn grad_check_rkulsif() {
        let (x, y) = gen_pair(43, 3, 10, 8, 0.4);
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let g = Arc::new(gram_blocks(&spec, &x, &y).unwrap());
        let obj = RkulsifObjective::new(g, 0.2).unwrap();
        let mut pts = Vec::new();
        let mut rng = crate::synth::substream(44, &[0]);
        use rand::Rng;
        for _ in 0..5 {
            pts.push(DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0)));
        }
        let err = grad_check(&obj, &pts, 1e-5).unwrap();
        assert!(err <= 1e-6, "err {err}");
    }

    #[test]
    fn grad_check_kl_at_feasible_point() {
        let (x, y) = gen_pair(45, 3, 10, 10, 0.4);
        let spec = KernelSpec::gaussian(1.1).unwrap();
        let g = Arc::new(gram_blocks(&spec, &x, &y).unwrap());
        let lambda = 0.2;
        let alpha0 = kl_feasible_start(&g, lambda).unwrap();
        let obj = MestObjective::new(g, lambda, PsiSpec::kullback_leibler()).unwrap();
        let err = grad_check(&obj, &[alpha0], 1e-5).unwrap();
        assert!(err <= 1e-5, "err {err}");
    }

    #[test]
    fn grad_check_skips_infeasible_probes() {
        // KL objective with w(X_i) barely below zero: probing +h crosses the
        // domain boundary, so every coordinate is skipped. Using Y = X makes
        // the Y-side values coincide with the controlled X-side ones.
        let (x, _) = gen_pair(46, 2, 5, 5, 0.3);
        let y = x.clone();
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let g = Arc::new(gram_blocks(&spec, &x, &y).unwrap());
        let lambda = 0.3;
        // target w(X) == -1e-9: infeasible for any probe of size ~1e-5
        let b = 1.0 / (5.0 * lambda);
        let ones = DVector::from_element(5, 1.0);
        let kx1 = g.k12() * &ones;
        let target = DVector::from_element(5, -1e-9);
        let alpha = crate::linalg::solve_spd(g.k11(), &(target - b * &kx1)).unwrap();
        let obj = MestObjective::new(g, lambda, PsiSpec::kullback_leibler()).unwrap();
        assert!(obj.value(&alpha).is_ok(), "base point must be feasible");
        let err = grad_check(&obj, &[alpha], 1e-5);
        assert!(matches!(err.unwrap_err(), Error::AllProbesInfeasible));
    }
}
