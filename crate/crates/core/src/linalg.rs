//! Small dense symmetric positive-definite linear algebra.
//!
//! Design matrices here never exceed a few dozen columns, so an unblocked
//! Cholesky factorization covers every solve in the crate without pulling in
//! a LAPACK backend.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<F> {
    lower: Array2<F>,
}

impl<F: Real> Cholesky<F> {
    /// Factorize a symmetric matrix. Fails if a pivot is not strictly positive.
    pub fn new(a: &Array2<F>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.ncols(),
            });
        }
        let mut l = Array2::<F>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if diag.partial_cmp(&F::zero()) != Some(std::cmp::Ordering::Greater)
                || !diag.is_finite()
            {
                return Err(Error::RankDeficient);
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Solve `A x = b` via forward/back substitution.
    pub fn solve(&self, b: &Array1<F>) -> Array1<F> {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let l = &self.lower;
        let mut y = b.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        y
    }

    /// Quadratic form `vᵀ A⁻¹ v`.
    pub fn quad_form_inv(&self, v: &Array1<F>) -> F {
        v.dot(&self.solve(v))
    }
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn max_eigenvalue<F: Real>(a: &Array2<F>, iterations: usize) -> F {
    let n = a.nrows();
    if n == 0 {
        return F::zero();
    }
    let mut v = Array1::<F>::from_elem(n, real::<F>(1.0) / real::<F>(n as f64).sqrt());
    let mut lambda = F::zero();
    for _ in 0..iterations {
        let w = a.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm <= F::zero() || !norm.is_finite() {
            return F::zero();
        }
        v = w / norm;
        lambda = v.dot(&a.dot(&v));
    }
    lambda
}

/// Smallest eigenvalue estimate via inverse power iteration on a factorization.
pub fn min_eigenvalue_est<F: Real>(a: &Array2<F>, chol: &Cholesky<F>, iterations: usize) -> F {
    let n = a.nrows();
    if n == 0 {
        return F::zero();
    }
    let mut v = Array1::<F>::from_elem(n, real::<F>(1.0) / real::<F>(n as f64).sqrt());
    let mut lambda = F::zero();
    for _ in 0..iterations {
        let w = chol.solve(&v);
        let norm = w.dot(&w).sqrt();
        if norm <= F::zero() || !norm.is_finite() {
            return F::zero();
        }
        v = w / norm;
        lambda = v.dot(&a.dot(&v));
    }
    lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_known_system() {
        let a: Array2<f64> = array![[4.0, 2.0], [2.0, 3.0]];
        let chol = Cholesky::new(&a).unwrap();
        let b = array![8.0, 7.0];
        let x = chol.solve(&b);
        // 4x + 2y = 8, 2x + 3y = 7 -> x = 1.25, y = 1.5
        assert!((x[0] - 1.25).abs() < 1e-12);
        assert!((x[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_indefinite() {
        let a: Array2<f64> = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(Cholesky::new(&a), Err(Error::RankDeficient)));
    }

    #[test]
    fn rejects_singular() {
        let a: Array2<f64> = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(Cholesky::new(&a).is_err());
    }

    #[test]
    fn eigenvalue_estimates_bracket_spectrum() {
        let a: Array2<f64> = array![[3.0, 1.0], [1.0, 2.0]];
        let chol = Cholesky::new(&a).unwrap();
        let hi = max_eigenvalue(&a, 100);
        let lo = min_eigenvalue_est(&a, &chol, 100);
        // Exact eigenvalues (5 ± sqrt(5)) / 2.
        let exact_hi = (5.0 + 5.0_f64.sqrt()) / 2.0;
        let exact_lo = (5.0 - 5.0_f64.sqrt()) / 2.0;
        assert!((hi - exact_hi).abs() < 1e-8);
        assert!((lo - exact_lo).abs() < 1e-8);
    }

    #[test]
    fn quad_form_matches_solve() {
        let a: Array2<f64> = array![[2.0, 0.5], [0.5, 1.0]];
        let chol = Cholesky::new(&a).unwrap();
        let v = array![1.0, -2.0];
        let q = chol.quad_form_inv(&v);
        let x = chol.solve(&v);
        assert!((q - v.dot(&x)).abs() < 1e-14);
    }
}
