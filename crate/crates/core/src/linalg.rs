//! Shared dense linear-algebra helpers: symmetric positive-definite solves
//! with a bounded ridge-jitter retry, numerical rank checks, and a symmetric
//! inverse square root.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative scale of the ridge jitter applied when a symmetric solve fails:
/// lambda = JITTER_SCALE * trace / p.
pub const JITTER_SCALE: f64 = 1e-8;

/// Relative tolerance for numerical-rank decisions (column-pivoted QR).
pub const RANK_TOL: f64 = 1e-12;

/// A factored symmetric positive-definite system `A + jitter * I`.
///
/// `jitter` is zero when the plain factorization succeeded and
/// `JITTER_SCALE * trace(A) / p` when one retry was needed.
#[derive(Clone, Debug)]
pub struct SymSolve {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl SymSolve {
    /// Factor `a`, retrying once with ridge jitter; fails with
    /// `SingularInformation` if the jittered matrix still cannot be factored.
    pub fn factor(a: &DMatrix<f64>, context: &str) -> Result<Self> {
        debug_assert_eq!(a.nrows(), a.ncols());
        if let Some(chol) = Cholesky::new(a.clone()) {
            return Ok(SymSolve { chol, jitter: 0.0 });
        }
        let p = a.nrows();
        let lambda = JITTER_SCALE * a.trace() / p as f64;
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::SingularInformation {
                context: format!("{context}: nonpositive trace, jitter impossible"),
            });
        }
        let mut jittered = a.clone();
        for i in 0..p {
            jittered[(i, i)] += lambda;
        }
        match Cholesky::new(jittered) {
            Some(chol) => Ok(SymSolve {
                chol,
                jitter: lambda,
            }),
            None => Err(Error::SingularInformation {
                context: format!("{context}: factorization failed even with ridge jitter"),
            }),
        }
    }

    /// Jitter that was added to the diagonal (0 when none was needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Solve `(A + jitter I) x = b`.
    pub fn solve_vector(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// Solve `(A + jitter I) X = B` column-wise.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }
}

/// Numerical rank of `m` via column-pivoted QR with relative tolerance
/// [`RANK_TOL`]. Returns 0 for an all-zero matrix.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let qr = m.clone().col_piv_qr();
    let r = qr.r();
    let k = r.nrows().min(r.ncols());
    if k == 0 {
        return 0;
    }
    let lead = r[(0, 0)].abs();
    if lead == 0.0 {
        return 0;
    }
    (0..k).take_while(|&i| r[(i, i)].abs() > RANK_TOL * lead).count()
}

/// Symmetric inverse square root of a positive-definite matrix.
///
/// Fails with `SingularInformation` when an eigenvalue is not strictly
/// positive (relative to the largest).
pub fn inv_sqrt_spd(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    if !max.is_finite() || max <= 0.0 {
        return Err(Error::SingularInformation {
            context: format!("{context}: no positive eigenvalue"),
        });
    }
    for &ev in eig.eigenvalues.iter() {
        // NaN must fail this check, so compare in the rejecting direction.
        if ev.is_nan() || ev <= RANK_TOL * max {
            return Err(Error::SingularInformation {
                context: format!("{context}: eigenvalue {ev:.3e} not positive"),
            });
        }
    }
    let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        eig.eigenvectors[(i, j)] / eig.eigenvalues[j].sqrt()
    });
    Ok(&scaled * eig.eigenvectors.transpose())
}

/// `X' diag(w) X` for a tall `X` (rows are observations), computed as a
/// single symmetric product of the row-scaled matrix.
pub fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    debug_assert_eq!(x.nrows(), w.len());
    let mut scaled = x.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        let s = w[i].sqrt();
        row *= s;
    }
    scaled.tr_mul(&scaled)
}

/// Extract the rows `idx` of `x` into a dense `|idx| x p` matrix.
pub fn gather_rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn factor_identity_and_solve() {
        let a = DMatrix::<f64>::identity(3, 3) * 4.0;
        let s = SymSolve::factor(&a, "test").unwrap();
        assert_eq!(s.jitter(), 0.0);
        let b = DVector::from_vec(vec![8.0, 4.0, 2.0]);
        let x = s.solve_vector(&b);
        assert_relative_eq!(x[0], 2.0, max_relative = 1e-14);
        assert_relative_eq!(x[2], 0.5, max_relative = 1e-14);
    }

    #[test]
    fn jitter_rescues_positive_semidefinite() {
        // rank-1 PSD matrix: plain Cholesky fails, jittered succeeds.
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let a = &v * v.transpose();
        let s = SymSolve::factor(&a, "test").unwrap();
        assert!(s.jitter() > 0.0, "jitter must have been applied");
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = s.solve_vector(&b);
        // (A + l I) x = b must hold to solver accuracy.
        let resid = (&a * &x + &x * s.jitter()) - b;
        assert!(resid.amax() < 1e-10, "residual {} too large", resid.amax());
    }

    #[test]
    fn zero_matrix_cannot_be_jittered() {
        let a = DMatrix::<f64>::zeros(2, 2);
        let err = SymSolve::factor(&a, "test").unwrap_err();
        assert!(matches!(err, Error::SingularInformation { .. }));
    }

    #[test]
    fn rank_of_degenerate_designs() {
        let full = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(numerical_rank(&full), 2);
        // Identical rows span a single direction.
        let flat = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert_eq!(numerical_rank(&flat), 1);
        assert_eq!(numerical_rank(&DMatrix::<f64>::zeros(3, 2)), 0);
    }

    #[test]
    fn inv_sqrt_recovers_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = inv_sqrt_spd(&a, "test").unwrap();
        // s * a * s should be the identity for a symmetric inverse root.
        let prod = &s * &a * &s;
        assert_relative_eq!(prod[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(prod[(1, 1)], 1.0, epsilon = 1e-12);
        assert!(prod[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn weighted_gram_matches_naive_loop() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, 1.0]);
        let w = DVector::from_vec(vec![0.5, 2.0, 1.5]);
        let fast = weighted_gram(&x, &w);
        let mut naive = DMatrix::<f64>::zeros(2, 2);
        for i in 0..3 {
            let xi = x.row(i).transpose();
            naive += &xi * xi.transpose() * w[i];
        }
        assert_relative_eq!(fast[(0, 0)], naive[(0, 0)], max_relative = 1e-14);
        assert_relative_eq!(fast[(0, 1)], naive[(0, 1)], max_relative = 1e-14);
        assert_relative_eq!(fast[(1, 1)], naive[(1, 1)], max_relative = 1e-14);
    }
}
