use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a matrix is reported as numerically
/// singular and its condition number as infinite. No automatic jitter is
/// applied; regularization is always an explicit caller choice.
pub const COND_SINGULAR_RTOL: f64 = 1e-14;

/// Extreme eigenvalues and condition number of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSummary {
    pub eig_min: f64,
    pub eig_max: f64,
    /// eig_max / eig_min, or +infinity when eig_min <= 1e-14 * eig_max.
    pub cond: f64,
}

/// (A + A^T) / 2.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (a + a.transpose())
}

/// Extreme eigenvalues via a full dense symmetric eigendecomposition
/// (tridiagonalization followed by implicit-shift QL). The input is
/// symmetrized as (A + A^T)/2 before decomposing.
pub fn spectral_summary(a: &DMatrix<f64>) -> Result<SpectralSummary> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            actual: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "spectral_summary input",
        });
    }
    let sym = symmetrize(a);
    let eigs = sym.symmetric_eigenvalues();
    let eig_min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    let eig_max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cond = if eig_min <= COND_SINGULAR_RTOL * eig_max {
        f64::INFINITY
    } else {
        eig_max / eig_min
    };
    Ok(SpectralSummary {
        eig_min,
        eig_max,
        cond,
    })
}

/// Full symmetric eigendecomposition, eigenvalues sorted in decreasing order
/// with matching eigenvector columns.
pub fn symmetric_eigen_sorted(a: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "eigendecomposition input",
        });
    }
    let decomp = symmetrize(a).symmetric_eigen();
    let n = decomp.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        decomp.eigenvalues[j]
            .partial_cmp(&decomp.eigenvalues[i])
            .unwrap()
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| decomp.eigenvalues[i]));
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &decomp.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    l: DMatrix<f64>,
}

/// Factors a symmetric positive definite matrix as L L^T, reading only the
/// lower triangle. A non-positive pivot aborts with the pivot index.
pub fn spd_factor(a: &DMatrix<f64>) -> Result<SpdFactor> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "spd_factor input",
        });
    }
    let mut l = a.clone();
    {
        // Left-looking factorization over contiguous column slices
        // (column-major storage).
        let data = l.as_mut_slice();
        for j in 0..n {
            let (head, tail) = data.split_at_mut(j * n);
            let colj = &mut tail[j..n];
            for k in 0..j {
                let colk = &head[k * n + j..k * n + n];
                let ljk = colk[0];
                if ljk != 0.0 {
                    for (t, v) in colk.iter().enumerate() {
                        colj[t] -= ljk * v;
                    }
                }
            }
            let d = colj[0];
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::Singular { pivot: j });
            }
            let root = d.sqrt();
            colj[0] = root;
            let inv = 1.0 / root;
            for v in colj[1..].iter_mut() {
                *v *= inv;
            }
        }
    }
    // zero the strict upper triangle left over from the input copy
    for j in 0..n {
        for i in 0..j {
            l[(i, j)] = 0.0;
        }
    }
    Ok(SpdFactor { l })
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Solves A x = b by forward then backward substitution.
    pub fn solve_vector(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: b.len(),
            });
        }
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        Ok(x)
    }

    /// Solves A X = B column by column.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if b.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: b.nrows(),
            });
        }
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            self.solve_in_place(col.as_mut_slice());
        }
        Ok(x)
    }

    fn solve_in_place(&self, v: &mut [f64]) {
        let n = self.dim();
        let l = self.l.as_slice();
        // forward: L y = b
        for j in 0..n {
            let yj = v[j] / l[j * n + j];
            v[j] = yj;
            let col = &l[j * n + j + 1..j * n + n];
            for (t, lij) in col.iter().enumerate() {
                v[j + 1 + t] -= lij * yj;
            }
        }
        // backward: L^T x = y
        for j in (0..n).rev() {
            let col = &l[j * n + j + 1..j * n + n];
            let mut s = v[j];
            for (t, lkj) in col.iter().enumerate() {
                s -= lkj * v[j + 1 + t];
            }
            v[j] = s / l[j * n + j];
        }
    }

    /// The explicit inverse A^{-1}, symmetrized. Needed where diagonal
    /// entries of the inverse enter a formula; prefer the solve methods
    /// otherwise.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let inv = self
            .solve_matrix(&DMatrix::<f64>::identity(n, n))
            .expect("identity has matching dimension");
        symmetrize(&inv)
    }
}

/// Solves the symmetric positive definite system A x = b through a Cholesky
/// factorization; no explicit inverse is formed.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    spd_factor(a)?.solve_vector(b)
}

/// Matrix right-hand-side variant of [`solve_spd`].
pub fn solve_spd_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_factor(a)?.solve_matrix(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_cond_is_one() {
        let s = spectral_summary(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(s.cond, 1.0);
        assert_eq!(s.eig_min, 1.0);
        assert_eq!(s.eig_max, 1.0);
    }

    #[test]
    fn diagonal_cond() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let s = spectral_summary(&a).unwrap();
        assert_relative_eq!(s.cond, 4.0, max_relative = 1e-14);
    }

    #[test]
    fn analytic_two_by_two() {
        // eigenvalues of [[2,1],[1,2]] are 3 and 1
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let s = spectral_summary(&a).unwrap();
        assert_relative_eq!(s.eig_max, 3.0, max_relative = 1e-13);
        assert_relative_eq!(s.eig_min, 1.0, max_relative = 1e-13);
        assert_relative_eq!(s.cond, 3.0, max_relative = 1e-12);
    }

    #[test]
    fn singular_matrix_reports_infinite_cond() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let s = spectral_summary(&a).unwrap();
        assert!(s.cond.is_infinite());
    }

    #[test]
    fn non_finite_rejected() {
        let mut a = DMatrix::identity(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(
            spectral_summary(&a).unwrap_err(),
            Error::NonFinite { .. }
        ));
    }

    #[test]
    fn cond_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
            let spd = &m * m.transpose() + DMatrix::identity(5, 5);
            let c = rng.random_range(1e-3..1e3);
            let s1 = spectral_summary(&spd).unwrap();
            let s2 = spectral_summary(&(c * &spd)).unwrap();
            assert_relative_eq!(s1.cond, s2.cond, max_relative = 1e-10);
        }
    }

    #[test]
    fn solve_identity_returns_rhs() {
        let b = DVector::from_vec(vec![3.0, -1.0, 2.5]);
        let x = solve_spd(&DMatrix::identity(3, 3), &b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn solve_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let x = solve_spd(&a, &DVector::from_vec(vec![2.0, 8.0])).unwrap();
        assert_relative_eq!(x[0], 1.0, max_relative = 1e-15);
        assert_relative_eq!(x[1], 2.0, max_relative = 1e-15);
    }

    #[test]
    fn solve_random_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let a = &m * m.transpose() + DMatrix::identity(6, 6);
        let b = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let x = solve_spd(&a, &b).unwrap();
        let res = (&a * &x - &b).norm();
        assert!(res < 1e-10, "residual {res}");
    }

    #[test]
    fn residual_bound_many_random_instances() {
        // 1000 random SPD systems up to 200 x 200:
        // ||A x - b|| <= 1e-8 (||A|| ||x|| + ||b||)
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..1000 {
            let n = rng.random_range(1..=200);
            let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let a = &m * m.transpose() + DMatrix::identity(n, n);
            let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let x = solve_spd(&a, &b).unwrap();
            let res = (&a * &x - &b).norm();
            let bound = 1e-8 * (a.norm() * x.norm() + b.norm());
            assert!(
                res <= bound,
                "trial {trial}: residual {res} > bound {bound}"
            );
        }
    }

    #[test]
    fn non_pd_reports_pivot() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        match spd_factor(&a).unwrap_err() {
            Error::Singular { pivot } => assert_eq!(pivot, 1),
            other => panic!("expected Singular, got {other:?}"),
        }
    }

    #[test]
    fn inverse_matches_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = DMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let a = &m * m.transpose() + DMatrix::identity(8, 8);
        let inv = spd_factor(&a).unwrap().inverse();
        let prod = &a * &inv;
        for i in 0..8 {
            for j in 0..8 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sorted_eigen_is_decreasing_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let m = DMatrix::from_fn(7, 7, |_, _| rng.random_range(-1.0..1.0));
        let a = symmetrize(&(&m * m.transpose()));
        let (vals, vecs) = symmetric_eigen_sorted(&a).unwrap();
        for i in 1..7 {
            assert!(vals[i - 1] >= vals[i]);
        }
        let rebuilt = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!((rebuilt - &a).norm() < 1e-10);
    }
}
