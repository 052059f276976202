//! Minimal dense symmetric solver used by the logistic fitter.
//!
//! The normal-equation systems here are tiny (rarely above ten columns), so a
//! hand-rolled Cholesky with diagonal pivoting beats pulling in a matrix
//! library. Pivoting is what lets us report *which* column made the design
//! rank deficient instead of silently producing garbage.

use crate::error::{Error, Result};
use crate::scalar::{s, Scalar};

/// Dense symmetric matrix, full row-major storage.
#[derive(Debug, Clone)]
pub(crate) struct SymMatrix<S> {
    pub n: usize,
    a: Vec<S>,
}

impl<S: Scalar> SymMatrix<S> {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            a: vec![S::zero(); n * n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: S) {
        self.a[i * self.n + j] = self.a[i * self.n + j] + v;
    }

    /// Adds `v` at (i, j) and mirrors it to (j, i), keeping the full
    /// storage symmetric when accumulating one triangle.
    #[inline]
    pub fn add_sym(&mut self, i: usize, j: usize, v: S) {
        self.add(i, j, v);
        if i != j {
            self.add(j, i, v);
        }
    }

    pub fn fill_zero(&mut self) {
        self.a.iter_mut().for_each(|v| *v = S::zero());
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: S) {
        self.a[i * self.n + j] = v;
    }

    fn swap_sym(&mut self, p: usize, q: usize) {
        if p == q {
            return;
        }
        for k in 0..self.n {
            let (ip, iq) = (p * self.n + k, q * self.n + k);
            self.a.swap(ip, iq);
        }
        for k in 0..self.n {
            let (ip, iq) = (k * self.n + p, k * self.n + q);
            self.a.swap(ip, iq);
        }
    }
}

/// Solves `A x = b` for symmetric positive semi-definite `A` via Cholesky
/// with diagonal pivoting.
///
/// Rank deficiency is declared when the largest remaining pivot falls below
/// a tolerance relative to the largest initial diagonal entry; the error
/// names the offending column in the caller's original ordering.
pub(crate) fn solve_spd_pivoted<S: Scalar>(a: &SymMatrix<S>, b: &[S]) -> Result<Vec<S>> {
    let n = a.n;
    debug_assert_eq!(b.len(), n);
    let mut m = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();

    let max_diag = (0..n)
        .map(|i| m.get(i, i))
        .fold(S::zero(), |acc, v| acc.max(v));
    // 1e-10 relative suits f64; the epsilon term keeps f32 from false positives.
    let tol = max_diag * s::<S>(1e-10).max(s::<S>(100.0) * S::epsilon());

    for k in 0..n {
        let (piv, piv_val) = (k..n)
            .map(|i| (i, m.get(i, i)))
            .fold((k, S::neg_infinity()), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
        if !(piv_val > tol) {
            return Err(Error::RankDeficientDesign { column: perm[piv] });
        }
        m.swap_sym(k, piv);
        perm.swap(k, piv);

        let lkk = piv_val.sqrt();
        m.set(k, k, lkk);
        for i in (k + 1)..n {
            let v = m.get(i, k) / lkk;
            m.set(i, k, v);
        }
        for i in (k + 1)..n {
            let lik = m.get(i, k);
            for j in (k + 1)..=i {
                let v = m.get(i, j) - lik * m.get(j, k);
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
    }

    // A = P' L L' P, so x = P' solve(L L', P b).
    let mut y: Vec<S> = (0..n).map(|k| b[perm[k]]).collect();
    for i in 0..n {
        let mut acc = y[i];
        for j in 0..i {
            acc = acc - m.get(i, j) * y[j];
        }
        y[i] = acc / m.get(i, i);
    }
    for i in (0..n).rev() {
        let mut acc = y[i];
        for j in (i + 1)..n {
            acc = acc - m.get(j, i) * y[j];
        }
        y[i] = acc / m.get(i, i);
    }
    let mut x = vec![S::zero(); n];
    for k in 0..n {
        x[perm[k]] = y[k];
    }
    Ok(x)
}

/// Plain (unpivoted) lower Cholesky factor of a positive definite matrix.
///
/// Used for posterior coefficient draws, where the Fisher information at a
/// converged fit is expected to be positive definite.
#[derive(Debug, Clone)]
pub(crate) struct Cholesky<S> {
    n: usize,
    l: Vec<S>,
}

pub(crate) fn cholesky<S: Scalar>(a: &SymMatrix<S>) -> Result<Cholesky<S>> {
    let n = a.n;
    let mut l = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a.get(i, j);
            for k in 0..j {
                acc = acc - l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(acc > S::zero()) {
                    return Err(Error::RankDeficientDesign { column: i });
                }
                l[i * n + i] = acc.sqrt();
            } else {
                l[i * n + j] = acc / l[j * n + j];
            }
        }
    }
    Ok(Cholesky { n, l })
}

impl<S: Scalar> Cholesky<S> {
    /// Solves `L' x = z`. With `L L' = I_F` (Fisher information), the result
    /// has covariance `I_F^{-1}` when `z` is standard normal, which is
    /// exactly the approximate-posterior draw the imputation step needs.
    pub fn solve_transpose(&self, z: &[S]) -> Vec<S> {
        let n = self.n;
        debug_assert_eq!(z.len(), n);
        let mut x = z.to_vec();
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc = acc - self.l[j * n + i] * x[j];
            }
            x[i] = acc / self.l[i * n + i];
        }
        x
    }
}
