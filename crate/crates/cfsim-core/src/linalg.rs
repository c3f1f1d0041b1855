//! Dense Cholesky factorizations for Hermitian (complex) and symmetric
//! (real) positive-definite matrices.
//!
//! Every matrix inverse in the library is applied through these solves;
//! explicit inverses are never formed. Sizes stay small (at most a few
//! hundred), so straightforward O(n³) kernels are entirely adequate.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Conjugated inner product `Σ conj(a_i)·b_i`.
pub fn cdot(a: ArrayView1<'_, Complex64>, b: ArrayView1<'_, Complex64>) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Lower-triangular Cholesky factor of a Hermitian positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<Complex64>,
}

impl Cholesky {
    /// Factors `a = L·Lᴴ`. Only the lower triangle of `a` is read.
    pub fn factor(a: ArrayView2<'_, Complex64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension {
                context: "Cholesky::factor",
                detail: format!("matrix is {}x{}", a.nrows(), a.ncols()),
            });
        }
        let mut l = Array2::<Complex64>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[[j, j]].re;
            for k in 0..j {
                diag -= l[[j, k]].norm_sqr();
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    pivot: diag,
                    index: j,
                });
            }
            let ljj = diag.sqrt();
            l[[j, j]] = Complex64::new(ljj, 0.0);
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]].conj();
                }
                l[[i, j]] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut Array1<Complex64>) {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        // forward: L y = b
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[[i, k]] * b[k];
            }
            b[i] = s / self.l[[i, i]].re;
        }
        // backward: Lᴴ x = y
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[[k, i]].conj() * b[k];
            }
            b[i] = s / self.l[[i, i]].re;
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: ArrayView1<'_, Complex64>) -> Array1<Complex64> {
        let mut x = b.to_owned();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: ArrayView2<'_, Complex64>) -> Array2<Complex64> {
        let mut x = b.to_owned();
        for mut col in x.columns_mut() {
            let mut v = col.to_owned();
            self.solve_in_place(&mut v);
            col.assign(&v);
        }
        x
    }
}

/// Lower-triangular Cholesky factor of a real SPD matrix.
#[derive(Debug, Clone)]
pub struct CholeskyReal {
    l: Array2<f64>,
}

impl CholeskyReal {
    /// Factors `a = L·Lᵀ`. Only the lower triangle of `a` is read.
    pub fn factor(a: ArrayView2<'_, f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension {
                context: "CholeskyReal::factor",
                detail: format!("matrix is {}x{}", a.nrows(), a.ncols()),
            });
        }
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[[j, j]];
            for k in 0..j {
                diag -= l[[j, k]] * l[[j, k]];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    pivot: diag,
                    index: j,
                });
            }
            let ljj = diag.sqrt();
            l[[j, j]] = ljj;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    /// Factors `a + jitter·I`, escalating the jitter by 10x up to `tries`
    /// times, starting from `jitter0`. Returns the factor and the jitter
    /// actually applied (0.0 when the plain factorization succeeds).
    pub fn factor_with_jitter(
        a: ArrayView2<'_, f64>,
        jitter0: f64,
        tries: usize,
    ) -> Result<(Self, f64)> {
        match Self::factor(a) {
            Ok(c) => return Ok((c, 0.0)),
            Err(Error::NotPositiveDefinite { .. }) => {}
            Err(e) => return Err(e),
        }
        let mut jitter = jitter0;
        for _ in 0..tries {
            let mut aj = a.to_owned();
            for i in 0..aj.nrows() {
                aj[[i, i]] += jitter;
            }
            match Self::factor(aj.view()) {
                Ok(c) => return Ok((c, jitter)),
                Err(Error::NotPositiveDefinite { .. }) => jitter *= 10.0,
                Err(e) => return Err(e),
            }
        }
        Err(Error::Generation(format!(
            "covariance not positive definite even with jitter up to {:.1e}",
            jitter / 10.0
        )))
    }

    /// The matrix square root action `L·v` (for sampling correlated Gaussians).
    pub fn lower_times(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        let n = self.l.nrows();
        debug_assert_eq!(v.len(), n);
        let mut out = Array1::<f64>::zeros(n);
        for i in 0..n {
            let mut s = 0.0;
            for k in 0..=i {
                s += self.l[[i, k]] * v[k];
            }
            out[i] = s;
        }
        out
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut Array1<f64>) {
        let n = self.l.nrows();
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[[i, k]] * b[k];
            }
            b[i] = s / self.l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[[k, i]] * b[k];
            }
            b[i] = s / self.l[[i, i]];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal, seed_rng, standard_normal};
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;

    fn random_hpd(n: usize, seed: u64) -> Array2<Complex64> {
        let mut rng = seed_rng(seed);
        let b = Array2::from_shape_fn((n, n), |_| complex_normal(&mut rng));
        // BᴴB + I is Hermitian positive definite
        let mut a = Array2::<Complex64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                a[[i, j]] = cdot(b.column(i), b.column(j));
            }
            a[[i, i]] += 1.0;
        }
        a
    }

    #[test]
    fn complex_factor_reconstructs() {
        let a = random_hpd(12, 3);
        let c = Cholesky::factor(a.view()).unwrap();
        let n = a.nrows();
        for i in 0..n {
            for j in 0..n {
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    s += c.l[[i, k]] * c.l[[j, k]].conj();
                }
                assert_abs_diff_eq!(s.re, a[[i, j]].re, epsilon = 1e-10);
                assert_abs_diff_eq!(s.im, a[[i, j]].im, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn complex_solve_residual_small() {
        let a = random_hpd(16, 5);
        let c = Cholesky::factor(a.view()).unwrap();
        let mut rng = seed_rng(7);
        let b = Array1::from_shape_fn(16, |_| complex_normal(&mut rng));
        let x = c.solve(b.view());
        let r = a.dot(&x) - &b;
        assert!(r.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-10);
    }

    #[test]
    fn not_pd_rejected() {
        let mut a = random_hpd(4, 9);
        a[[2, 2]] = Complex64::new(-5.0, 0.0);
        // make row/col consistent so only the pivot is at fault
        match Cholesky::factor(a.view()) {
            Err(Error::NotPositiveDefinite { .. }) => {}
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn real_solve_and_jitter() {
        let n = 10;
        let mut rng = seed_rng(11);
        let b = Array2::from_shape_fn((n, n), |_| standard_normal(&mut rng));
        let mut a = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                a[[i, j]] = b.column(i).dot(&b.column(j));
            }
            a[[i, i]] += 0.5;
        }
        let (c, jitter) = CholeskyReal::factor_with_jitter(a.view(), 1e-10, 5).unwrap();
        assert_eq!(jitter, 0.0);
        let rhs = Array1::from_shape_fn(n, |_| standard_normal(&mut rng));
        let mut x = rhs.clone();
        c.solve_in_place(&mut x);
        let r = a.dot(&x) - &rhs;
        assert!(r.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-9);
    }

    #[test]
    fn jitter_rescues_rank_deficient() {
        // rank-1 PSD matrix: plain factorization fails, jitter succeeds
        let v = Array1::from(vec![1.0, 2.0, 3.0]);
        let mut a = Array2::<f64>::zeros((3, 3));
        for i in 0..3 {
            for j in 0..3 {
                a[[i, j]] = v[i] * v[j];
            }
        }
        let (_, jitter) = CholeskyReal::factor_with_jitter(a.view(), 1e-10, 5).unwrap();
        assert!(jitter > 0.0);
    }
}
