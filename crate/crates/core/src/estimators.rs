//! Loss, gradient and Hessian definitions for the density-ratio estimator
//! family, the closed-form KuLSIF fit, and model evaluation.
//!
//! Every estimator optimizes the representer form
//! w(z) = sum_i alpha_i k(z, X_i) + sum_j beta_j k(z, Y_j) with beta frozen
//! at its common optimum (1/(m lambda)) 1_m, so the free parameters are the
//! n coefficients alpha.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result, SampleSide};
use crate::kernel::{gram_blocks, kernel_eval, GramBlocks, KernelSpec};
use crate::linalg::{solve_spd, spd_factor};
use crate::points::PointSet;
use crate::psi::{PsiKind, PsiSpec};

fn check_lambda(lambda: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    Ok(lambda)
}

/// A fitted density-ratio model in representer form.
#[derive(Debug, Clone)]
pub struct RatioModel {
    alpha: DVector<f64>,
    beta: DVector<f64>,
    lambda: f64,
    kernel: KernelSpec,
    x_train: Arc<PointSet>,
    y_train: Arc<PointSet>,
}

impl RatioModel {
    pub fn new(
        alpha: DVector<f64>,
        beta: DVector<f64>,
        lambda: f64,
        kernel: KernelSpec,
        x_train: Arc<PointSet>,
        y_train: Arc<PointSet>,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        if alpha.len() != x_train.len() {
            return Err(Error::DimensionMismatch {
                expected: x_train.len(),
                actual: alpha.len(),
            });
        }
        if beta.len() != y_train.len() {
            return Err(Error::DimensionMismatch {
                expected: y_train.len(),
                actual: beta.len(),
            });
        }
        if x_train.dim() != y_train.dim() {
            return Err(Error::DimensionMismatch {
                expected: x_train.dim(),
                actual: y_train.dim(),
            });
        }
        Ok(RatioModel {
            alpha,
            beta,
            lambda,
            kernel,
            x_train,
            y_train,
        })
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn x_train(&self) -> &Arc<PointSet> {
        &self.x_train
    }

    pub fn y_train(&self) -> &Arc<PointSet> {
        &self.y_train
    }

    /// The raw representer sum w(z).
    pub fn predict(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.x_train.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.x_train.dim(),
                actual: z.len(),
            });
        }
        let mut acc = 0.0;
        for (i, xi) in self.x_train.iter_points().enumerate() {
            acc += self.alpha[i] * kernel_eval(&self.kernel, z, xi)?;
        }
        for (j, yj) in self.y_train.iter_points().enumerate() {
            acc += self.beta[j] * kernel_eval(&self.kernel, z, yj)?;
        }
        Ok(acc)
    }

    /// max{w(z), 0}; density ratios are non-negative.
    pub fn predict_truncated(&self, z: &[f64]) -> Result<f64> {
        Ok(self.predict(z)?.max(0.0))
    }
}

/// The closed-form KuLSIF coefficients:
/// alpha = -(1/(m lambda)) (K11 + n lambda I)^{-1} K12 1_m and
/// beta = (1/(m lambda)) 1_m.
pub fn kulsif_fit_direct(g: &GramBlocks, lambda: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    check_lambda(lambda)?;
    let (n, m) = (g.n(), g.m());
    let mut a = g.k11().clone();
    let shift = n as f64 * lambda;
    for i in 0..n {
        a[(i, i)] += shift;
    }
    let ones_m = DVector::from_element(m, 1.0);
    let rhs = g.k12() * &ones_m;
    let x = solve_spd(&a, &rhs)?;
    let scale = 1.0 / (m as f64 * lambda);
    let alpha = -scale * x;
    let beta = DVector::from_element(m, scale);
    Ok((alpha, beta))
}

/// Convenience wrapper: builds the kernel blocks and assembles a fitted
/// [`RatioModel`].
pub fn fit_kulsif(
    x: Arc<PointSet>,
    y: Arc<PointSet>,
    kernel: KernelSpec,
    lambda: f64,
) -> Result<RatioModel> {
    let g = gram_blocks(&kernel, &x, &y)?;
    let (alpha, beta) = kulsif_fit_direct(&g, lambda)?;
    RatioModel::new(alpha, beta, lambda, kernel, x, y)
}

/// Root-mean-square error of the truncated prediction against a reference
/// ratio over a set of evaluation points (drawn from P by the caller).
pub fn empirical_l2_error(
    model: &RatioModel,
    reference: impl Fn(&[f64]) -> f64,
    eval_points: &PointSet,
) -> Result<f64> {
    let mut acc = 0.0;
    for z in eval_points.iter_points() {
        let diff = model.predict_truncated(z)? - reference(z);
        acc += diff * diff;
    }
    Ok((acc / eval_points.len() as f64).sqrt())
}

/// Which loss an [`Objective`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    RKulsif,
    Kulsif,
    KmmInductive,
    MEstimator(PsiKind),
}

/// A differentiable loss over the free coefficients alpha. Implementations
/// are immutable after construction (kernel blocks are captured behind an
/// `Arc`), so evaluation is reentrant and thread-safe.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn kind(&self) -> ObjectiveKind;
    fn value(&self, alpha: &DVector<f64>) -> Result<f64>;
    fn gradient(&self, alpha: &DVector<f64>) -> Result<DVector<f64>>;
}

fn check_dim(expected: usize, alpha: &DVector<f64>) -> Result<()> {
    if alpha.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            actual: alpha.len(),
        });
    }
    if alpha.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "coefficient vector",
        });
    }
    Ok(())
}

/// Shared precomputations over a set of kernel blocks.
#[derive(Debug, Clone)]
struct BlockCache {
    blocks: Arc<GramBlocks>,
    lambda: f64,
    /// K12 1_m
    kx1: DVector<f64>,
    /// K22 1_m
    ky1: DVector<f64>,
    /// 1_m^T K22 1_m
    s22: f64,
}

impl BlockCache {
    fn new(blocks: Arc<GramBlocks>, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        let ones_m = DVector::from_element(blocks.m(), 1.0);
        let kx1 = blocks.k12() * &ones_m;
        let ky1 = blocks.k22() * &ones_m;
        let s22 = ones_m.dot(&ky1);
        Ok(BlockCache {
            blocks,
            lambda,
            kx1,
            ky1,
            s22,
        })
    }

    fn n(&self) -> usize {
        self.blocks.n()
    }

    fn m(&self) -> usize {
        self.blocks.m()
    }

    /// 1 / (m lambda), the frozen beta coefficient.
    fn beta_coeff(&self) -> f64 {
        1.0 / (self.m() as f64 * self.lambda)
    }

    /// The constant linear term (1/(n m lambda)) K12 1_m of the reduced
    /// quadratic.
    fn linear_term(&self) -> DVector<f64> {
        (1.0 / (self.n() as f64 * self.m() as f64 * self.lambda)) * &self.kx1
    }
}

/// Reduced least-squares objective:
/// f(alpha) = 1/2 alpha^T (K11/n + lambda I) alpha + c^T alpha with
/// c = (1/(n m lambda)) K12 1_m. Shares its minimizer with the full
/// objective but has Hessian K11/n + lambda I.
#[derive(Debug, Clone)]
pub struct RkulsifObjective {
    cache: BlockCache,
    linear: DVector<f64>,
}

impl RkulsifObjective {
    pub fn new(blocks: Arc<GramBlocks>, lambda: f64) -> Result<Self> {
        let cache = BlockCache::new(blocks, lambda)?;
        let linear = cache.linear_term();
        Ok(RkulsifObjective { cache, linear })
    }

    /// The constant Hessian K11/n + lambda I.
    pub fn hessian(&self) -> DMatrix<f64> {
        let n = self.cache.n();
        let mut h = self.cache.blocks.k11() / (n as f64);
        for i in 0..n {
            h[(i, i)] += self.cache.lambda;
        }
        h
    }
}

impl Objective for RkulsifObjective {
    fn dim(&self) -> usize {
        self.cache.n()
    }

    fn kind(&self) -> ObjectiveKind {
        ObjectiveKind::RKulsif
    }

    fn value(&self, alpha: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), alpha)?;
        let n = self.cache.n() as f64;
        let k11_a = self.cache.blocks.k11() * alpha;
        Ok(
            0.5 * (alpha.dot(&k11_a) / n + self.cache.lambda * alpha.dot(alpha))
                + self.linear.dot(alpha),
        )
    }

    fn gradient(&self, alpha: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), alpha)?;
        let n = self.cache.n() as f64;
        let mut g = self.cache.blocks.k11() * alpha;
        g /= n;
        g.axpy(self.cache.lambda, alpha, 1.0);
        g += &self.linear;
        Ok(g)
    }
}

/// Kernel least-squares objective over alpha:
/// f(alpha) = 1/2 alpha^T (K11^2/n + lambda K11) alpha
///            + (1/(n m lambda)) 1^T K21 K11 alpha.
/// Its gradient equals K11 times the reduced gradient.
#[derive(Debug, Clone)]
pub struct KulsifObjective {
    cache: BlockCache,
    linear: DVector<f64>,
}

impl KulsifObjective {
    pub fn new(blocks: Arc<GramBlocks>, lambda: f64) -> Result<Self> {
        let cache = BlockCache::new(blocks, lambda)?;
        let linear = cache.linear_term();
        Ok(KulsifObjective { cache, linear })
    }

    /// The constant Hessian K11^2/n + lambda K11.
    pub fn hessian(&self) -> DMatrix<f64> {
        let k11 = self.cache.blocks.k11();
        let n = self.cache.n() as f64;
        (k11 * k11) / n + self.cache.lambda * k11
    }

    fn reduced_gradient(&self, alpha: &DVector<f64>) -> DVector<f64> {
        let n = self.cache.n() as f64;
        let mut g = self.cache.blocks.k11() * alpha;
        g /= n;
        g.axpy(self.cache.lambda, alpha, 1.0);
        g += &self.linear;
        g
    }
}

impl Objective for KulsifObjective {
    fn dim(&self) -> usize {
        self.cache.n()
    }

    fn kind(&self) -> ObjectiveKind {
        ObjectiveKind::Kulsif
    }

    fn value(&self, alpha: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), alpha)?;
        let n = self.cache.n() as f64;
        let k11_a = self.cache.blocks.k11() * alpha;
        // 1/2 (a^T K^2 a / n + lambda a^T K a) + c^T (K a)
        Ok(
            0.5 * (k11_a.dot(&k11_a) / n + self.cache.lambda * alpha.dot(&k11_a))
                + self.linear.dot(&k11_a),
        )
    }

    fn gradient(&self, alpha: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), alpha)?;
        let reduced = self.reduced_gradient(alpha);
        Ok(self.cache.blocks.k11() * reduced)
    }
}

/// Inductive kernel-mean-matching objective: the squared RKHS norm of the
/// regularized least-squares loss derivative, restricted to the span of the
/// X-centered kernel functions:
/// f(alpha) = 1/2 u^T K11 u with u = (K11/n + lambda I) alpha + c.
/// Vanishes exactly at the shared optimum; constant Hessian
/// K11^3/n^2 + (2 lambda/n) K11^2 + lambda^2 K11.
#[derive(Debug, Clone)]
pub struct KmmInductiveObjective {
    cache: BlockCache,
    linear: DVector<f64>,
}

impl KmmInductiveObjective {
    pub fn new(blocks: Arc<GramBlocks>, lambda: f64) -> Result<Self> {
        let cache = BlockCache::new(blocks, lambda)?;
        let linear = cache.linear_term();
        Ok(KmmInductiveObjective { cache, linear })
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        let k11 = self.cache.blocks.k11();
        let n = self.cache.n() as f64;
        let lambda = self.cache.lambda;
        let k2 = k11 * k11;
        (&k2 * k11) / (n * n) + (2.0 * lambda / n) * k2 + (lambda * lambda) * k11
    }

    /// u(alpha) = (K11/n + lambda I) alpha + c, the reduced gradient.
    fn residual(&self, alpha: &DVector<f64>) -> DVector<f64> {
        let n = self.cache.n() as f64;
        let mut u = self.cache.blocks.k11() * alpha;
        u /= n;
        u.axpy(self.cache.lambda, alpha, 1.0);
        u += &self.linear;
        u
    }
}

impl Objective for KmmInductiveObjective {
    fn dim(&self) -> usize {
        self.cache.n()
    }

    fn kind(&self) -> ObjectiveKind {
        ObjectiveKind::KmmInductive
    }

    fn value(&self, alpha: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), alpha)?;
        let u = self.residual(alpha);
        let k11_u = self.cache.blocks.k11() * &u;
        Ok(0.5 * u.dot(&k11_u))
    }

    fn gradient(&self, alpha: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), alpha)?;
        let n = self.cache.n() as f64;
        let u = self.residual(alpha);
        let k11_u = self.cache.blocks.k11() * &u;
        // (K11/n + lambda I) K11 u
        let mut g = self.cache.blocks.k11() * &k11_u;
        g /= n;
        g.axpy(self.cache.lambda, &k11_u, 1.0);
        Ok(g)
    }
}

/// General convex-conjugate M-estimator objective:
/// f(alpha) = (1/n) sum_i psi(w(X_i)) - (1/m) sum_j w(Y_j)
///            + (lambda/2) ||w||_H^2,
/// with w in representer form and beta frozen at (1/(m lambda)) 1_m. The
/// squared-norm constant (1/(m lambda))^2 1^T K22 1 is included so values
/// are comparable across runs.
#[derive(Debug, Clone)]
pub struct MestObjective {
    cache: BlockCache,
    psi: PsiSpec,
}

impl MestObjective {
    pub fn new(blocks: Arc<GramBlocks>, lambda: f64, psi: PsiSpec) -> Result<Self> {
        let cache = BlockCache::new(blocks, lambda)?;
        Ok(MestObjective { cache, psi })
    }

    pub fn psi(&self) -> &PsiSpec {
        &self.psi
    }

    /// w at the X points: K11 alpha + (1/(m lambda)) K12 1_m. Also returns
    /// K11 alpha for reuse.
    fn w_at_x(&self, alpha: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let k11_a = self.cache.blocks.k11() * alpha;
        let mut w = k11_a.clone();
        w.axpy(self.cache.beta_coeff(), &self.cache.kx1, 1.0);
        (w, k11_a)
    }

    /// w at the Y points: K21 alpha + (1/(m lambda)) K22 1_m.
    fn w_at_y(&self, alpha: &DVector<f64>) -> DVector<f64> {
        let mut w = self.cache.blocks.k12().tr_mul(alpha);
        w.axpy(self.cache.beta_coeff(), &self.cache.ky1, 1.0);
        w
    }

    fn check_domain(&self, w: &DVector<f64>, side: SampleSide) -> Result<()> {
        for (i, &v) in w.iter().enumerate() {
            if !self.psi.in_domain(v) {
                return Err(Error::PsiDomain {
                    side,
                    index: i,
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// The Hessian at alpha: (1/n) K11 D K11 + lambda K11 with
    /// D = diag(psi''(w(X_i))).
    pub fn hessian_at(&self, alpha: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), alpha)?;
        let (w_x, _) = self.w_at_x(alpha);
        self.check_domain(&w_x, SampleSide::X)?;
        let k11 = self.cache.blocks.k11();
        let n = self.cache.n() as f64;
        let mut scaled = k11.clone();
        for (j, &w) in w_x.iter().enumerate() {
            let d = self.psi.double_prime(w);
            scaled.column_mut(j).scale_mut(d);
        }
        Ok((scaled * k11) / n + self.cache.lambda * k11)
    }
}

impl Objective for MestObjective {
    fn dim(&self) -> usize {
        self.cache.n()
    }

    fn kind(&self) -> ObjectiveKind {
        ObjectiveKind::MEstimator(self.psi.kind())
    }

    fn value(&self, alpha: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), alpha)?;
        let (w_x, k11_a) = self.w_at_x(alpha);
        self.check_domain(&w_x, SampleSide::X)?;
        let w_y = self.w_at_y(alpha);
        self.check_domain(&w_y, SampleSide::Y)?;

        let n = self.cache.n() as f64;
        let m = self.cache.m() as f64;
        let b = self.cache.beta_coeff();
        let loss_x = w_x.iter().map(|&w| self.psi.psi(w)).sum::<f64>() / n;
        let loss_y = w_y.sum() / m;
        // ||w||_H^2 = a^T K11 a + 2 b a^T K12 1 + b^2 1^T K22 1
        let norm_sq =
            alpha.dot(&k11_a) + 2.0 * b * alpha.dot(&self.cache.kx1) + b * b * self.cache.s22;
        Ok(loss_x - loss_y + 0.5 * self.cache.lambda * norm_sq)
    }

    fn gradient(&self, alpha: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), alpha)?;
        let (w_x, _) = self.w_at_x(alpha);
        self.check_domain(&w_x, SampleSide::X)?;
        let w_y = self.w_at_y(alpha);
        self.check_domain(&w_y, SampleSide::Y)?;

        let n = self.cache.n() as f64;
        // (1/n) K11 psi'(w) + lambda K11 alpha; the linear Y-terms cancel
        // against the regularizer's beta coupling at the frozen beta.
        let mut v = DVector::from_fn(w_x.len(), |i, _| self.psi.prime(w_x[i]) / n);
        v.axpy(self.cache.lambda, alpha, 1.0);
        Ok(self.cache.blocks.k11() * v)
    }
}

/// A strictly feasible starting point for losses whose domain is the
/// negative half-line (e.g. Kullback-Leibler): solves
/// alpha = -K11^{-1} ((1/(m lambda)) K12 1 + delta 1) so that w(X_i) =
/// -delta exactly, then doubles delta (up to 8 times) until the values at
/// the Y points are negative as well.
pub fn kl_feasible_start(g: &GramBlocks, lambda: f64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    let (n, m) = (g.n(), g.m());
    let b = 1.0 / (m as f64 * lambda);
    let ones_m = DVector::from_element(m, 1.0);
    let ones_n = DVector::from_element(n, 1.0);
    let kx1 = g.k12() * &ones_m;
    let ky1 = g.k22() * &ones_m;

    let factor = spd_factor(g.k11())?;
    let u1 = factor.solve_vector(&(b * &kx1))?;
    let u2 = factor.solve_vector(&ones_n)?;
    // w(Y) = (b ky1 - K21 u1) - delta K21 u2
    let r = b * &ky1 - g.k12().tr_mul(&u1);
    let q = g.k12().tr_mul(&u2);

    let mut delta = 0.1;
    for _ in 0..=8 {
        let feasible_y = (0..m).all(|j| r[j] - delta * q[j] < 0.0);
        if feasible_y {
            let alpha = -(&u1 + delta * &u2);
            // guard against round-off pushing an X value across zero
            let w_x = g.k11() * &alpha + b * &kx1;
            if w_x.iter().all(|&v| v < 0.0) {
                return Ok(alpha);
            }
        }
        delta *= 2.0;
    }
    Err(Error::invalid(
        "no feasible starting point found after 8 bandwidth doublings",
    ))
}
