use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Tag identifying a convex loss kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiKind {
    /// psi(z) = z^2 / 2 on all of R (the least-squares loss).
    Squared,
    /// psi(z) = -1 - log(-z) on z < 0 (the Kullback-Leibler conjugate).
    KullbackLeibler,
    Custom,
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A convex function psi with its first two derivatives and an (exclusive)
/// upper domain bound. Divergence-based M-estimators plug a PsiSpec into the
/// shared loss template.
#[derive(Clone)]
pub struct PsiSpec {
    kind: PsiKind,
    psi: ScalarFn,
    prime: ScalarFn,
    double_prime: ScalarFn,
    /// Arguments must satisfy z < domain_upper; +infinity means unrestricted.
    domain_upper: f64,
}

impl fmt::Debug for PsiSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PsiSpec")
            .field("kind", &self.kind)
            .field("domain_upper", &self.domain_upper)
            .finish()
    }
}

impl PsiSpec {
    pub fn squared() -> Self {
        PsiSpec {
            kind: PsiKind::Squared,
            psi: Arc::new(|z| 0.5 * z * z),
            prime: Arc::new(|z| z),
            double_prime: Arc::new(|_| 1.0),
            domain_upper: f64::INFINITY,
        }
    }

    pub fn kullback_leibler() -> Self {
        PsiSpec {
            kind: PsiKind::KullbackLeibler,
            psi: Arc::new(|z| -1.0 - (-z).ln()),
            prime: Arc::new(|z| -1.0 / z),
            double_prime: Arc::new(|z| 1.0 / (z * z)),
            domain_upper: 0.0,
        }
    }

    /// A user-supplied convex loss. Convexity is spot-checked by sampling
    /// psi'' at 1000 points of a window just below `domain_upper` (or
    /// [-5, 5] for an unrestricted domain).
    pub fn custom(
        psi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        double_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        domain_upper: f64,
    ) -> Result<Self> {
        let spec = PsiSpec {
            kind: PsiKind::Custom,
            psi: Arc::new(psi),
            prime: Arc::new(prime),
            double_prime: Arc::new(double_prime),
            domain_upper,
        };
        let (lo, hi) = if domain_upper.is_finite() {
            (domain_upper - 10.0, domain_upper - 1e-9)
        } else {
            (-5.0, 5.0)
        };
        spec.check_convexity(lo, hi, 1000)?;
        Ok(spec)
    }

    pub fn kind(&self) -> PsiKind {
        self.kind
    }

    pub fn domain_upper(&self) -> f64 {
        self.domain_upper
    }

    pub fn in_domain(&self, z: f64) -> bool {
        z.is_finite() && z < self.domain_upper
    }

    pub fn psi(&self, z: f64) -> f64 {
        (self.psi)(z)
    }

    pub fn prime(&self, z: f64) -> f64 {
        (self.prime)(z)
    }

    pub fn double_prime(&self, z: f64) -> f64 {
        (self.double_prime)(z)
    }

    /// Verifies psi'' >= 0 on `samples` evenly spaced points of [lo, hi].
    pub fn check_convexity(&self, lo: f64, hi: f64, samples: usize) -> Result<()> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi || samples < 2 {
            return Err(Error::invalid(
                "convexity check needs lo < hi and >= 2 samples",
            ));
        }
        for i in 0..samples {
            let z = lo + (hi - lo) * (i as f64) / ((samples - 1) as f64);
            if !self.in_domain(z) {
                continue;
            }
            let dd = self.double_prime(z);
            if dd.is_nan() || dd < -1e-12 {
                return Err(Error::invalid(format!(
                    "psi''({z}) = {dd} < 0: function is not convex"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn squared_values() {
        let p = PsiSpec::squared();
        assert_eq!(p.psi(3.0), 4.5);
        assert_eq!(p.prime(3.0), 3.0);
        assert_eq!(p.double_prime(-7.0), 1.0);
        assert!(p.in_domain(1e300));
        p.check_convexity(-100.0, 100.0, 1000).unwrap();
    }

    #[test]
    fn kl_values() {
        let p = PsiSpec::kullback_leibler();
        assert_relative_eq!(p.psi(-1.0), -1.0, max_relative = 1e-15);
        assert_relative_eq!(p.prime(-2.0), 0.5, max_relative = 1e-15);
        assert_relative_eq!(p.double_prime(-2.0), 0.25, max_relative = 1e-15);
        assert!(p.in_domain(-1e-9));
        assert!(!p.in_domain(0.0));
        assert!(!p.in_domain(1.0));
        p.check_convexity(-50.0, -1e-6, 1000).unwrap();
    }

    #[test]
    fn kl_prime_is_derivative_of_psi() {
        let p = PsiSpec::kullback_leibler();
        for &z in &[-0.3, -1.0, -4.0] {
            let h = 1e-6;
            let fd = (p.psi(z + h) - p.psi(z - h)) / (2.0 * h);
            assert_relative_eq!(fd, p.prime(z), max_relative = 1e-7);
            let fd2 = (p.prime(z + h) - p.prime(z - h)) / (2.0 * h);
            assert_relative_eq!(fd2, p.double_prime(z), max_relative = 1e-6);
        }
    }

    #[test]
    fn custom_rejects_concave() {
        let err = PsiSpec::custom(|z| -z * z, |z| -2.0 * z, |_| -2.0, f64::INFINITY);
        assert!(err.is_err());
    }

    #[test]
    fn custom_accepts_convex() {
        let p = PsiSpec::custom(|z| z.exp(), |z| z.exp(), |z| z.exp(), f64::INFINITY).unwrap();
        assert_eq!(p.kind(), PsiKind::Custom);
    }
}
