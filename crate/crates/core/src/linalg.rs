//! Small dense/banded linear-algebra kernels used by the integrator.
//!
//! The banded LU follows the usual LAPACK band layout: entry `(i, j)` of a
//! matrix with `kl` subdiagonals and `ku` superdiagonals lives at band row
//! `ku + i - j`. Factorization widens the band by `kl` superdiagonals to make
//! room for fill-in from row pivoting.

use crate::scalar::Scalar;
use nalgebra::DMatrix;

/// Banded square matrix with `kl` sub- and `ku` superdiagonals.
#[derive(Clone, Debug)]
pub struct Banded<S> {
    n: usize,
    kl: usize,
    ku: usize,
    /// `(kl + ku + 1) x n`, row `ku + i - j`, column `j`.
    data: Vec<S>,
}

impl<S: Scalar> Banded<S> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        assert!(n > 0);
        Self {
            n,
            kl,
            ku,
            data: vec![S::zero(); (kl + ku + 1) * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kl(&self) -> usize {
        self.kl
    }

    pub fn ku(&self) -> usize {
        self.ku
    }

    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i + self.ku >= j && j + self.kl >= i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        if self.in_band(i, j) {
            self.data[(self.ku + i - j) * self.n + j]
        } else {
            S::zero()
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        assert!(self.in_band(i, j), "({i},{j}) outside band");
        self.data[(self.ku + i - j) * self.n + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: S) {
        assert!(self.in_band(i, j), "({i},{j}) outside band");
        self.data[(self.ku + i - j) * self.n + j] += v;
    }

    /// `out = self * v`.
    pub fn apply(&self, v: &[S], out: &mut [S]) {
        assert_eq!(v.len(), self.n);
        assert_eq!(out.len(), self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut acc = S::zero();
            for j in lo..=hi {
                acc += self.data[(self.ku + i - j) * self.n + j] * v[j];
            }
            out[i] = acc;
        }
    }

    /// Scale row `i` by `f`.
    pub fn scale_row(&mut self, i: usize, f: S) {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        for j in lo..=hi {
            self.data[(self.ku + i - j) * self.n + j] *= f;
        }
    }

    /// `self += alpha * other` (bands must be compatible).
    pub fn add_scaled(&mut self, alpha: S, other: &Banded<S>) {
        assert_eq!(self.n, other.n);
        assert!(self.kl >= other.kl && self.ku >= other.ku);
        for i in 0..self.n {
            let lo = i.saturating_sub(other.kl);
            let hi = (i + other.ku).min(self.n - 1);
            for j in lo..=hi {
                let v = other.data[(other.ku + i - j) * other.n + j];
                self.data[(self.ku + i - j) * self.n + j] += alpha * v;
            }
        }
    }

    /// Widen to at least (`kl`, `ku`).
    pub fn widened(&self, kl: usize, ku: usize) -> Banded<S> {
        let mut out = Banded::zeros(self.n, kl.max(self.kl), ku.max(self.ku));
        out.add_scaled(S::one(), self);
        out
    }

    pub fn to_dense(&self) -> DMatrix<S> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                if self.in_band(i, j) {
                    m[(i, j)] = self.get(i, j);
                }
            }
        }
        m
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j).modulus()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// LU factorization with row partial pivoting.
    pub fn lu(&self) -> Result<BandedLu<S>, SingularMatrix> {
        let n = self.n;
        let kl = self.kl;
        let kuw = self.ku + self.kl; // widened superdiagonal count
        let rows = kl + kuw + 1;
        let mut w = vec![S::zero(); rows * n];
        // copy into widened layout: entry (i, j) at w[(kuw + i - j) * n + j]
        for j in 0..n {
            let ilo = j.saturating_sub(self.ku);
            let ihi = (j + kl).min(n - 1);
            for i in ilo..=ihi {
                w[(kuw + i - j) * n + j] = self.get(i, j);
            }
        }
        let at = |w: &[S], i: usize, j: usize| w[(kuw + i - j) * n + j];
        let mut piv = vec![0usize; n];
        for k in 0..n {
            // pivot search in column k, rows k..=k+kl
            let imax = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = at(&w, k, k).modulus();
            for i in (k + 1)..=imax {
                let m = at(&w, i, k).modulus();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(SingularMatrix { column: k });
            }
            piv[k] = p;
            let jhi = (k + kuw).min(n - 1);
            if p != k {
                for j in k..=jhi {
                    let a = (kuw + k - j) * n + j;
                    let b = (kuw + p - j) * n + j;
                    w.swap(a, b);
                }
            }
            let pivot = at(&w, k, k);
            for i in (k + 1)..=imax {
                let m = at(&w, i, k) / pivot;
                w[(kuw + i - k) * n + k] = m;
                if m != S::zero() {
                    for j in (k + 1)..=jhi {
                        let upper = at(&w, k, j);
                        if upper != S::zero() {
                            w[(kuw + i - j) * n + j] -= m * upper;
                        }
                    }
                }
            }
        }
        Ok(BandedLu {
            n,
            kl,
            kuw,
            w,
            piv,
        })
    }
}

/// Factorized banded matrix.
#[derive(Clone, Debug)]
pub struct BandedLu<S> {
    n: usize,
    kl: usize,
    kuw: usize,
    w: Vec<S>,
    piv: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("singular matrix (zero pivot in column {column})")]
pub struct SingularMatrix {
    pub column: usize,
}

impl<S: Scalar> BandedLu<S> {
    pub fn solve_in_place(&self, x: &mut [S]) {
        let n = self.n;
        assert_eq!(x.len(), n);
        let at = |i: usize, j: usize| self.w[(self.kuw + i - j) * n + j];
        // forward: apply pivots and L
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(p, k);
            }
            let imax = (k + self.kl).min(n - 1);
            let xk = x[k];
            if xk != S::zero() {
                for i in (k + 1)..=imax {
                    let m = at(i, k);
                    if m != S::zero() {
                        x[i] -= m * xk;
                    }
                }
            }
        }
        // back substitution with U
        for k in (0..n).rev() {
            let jhi = (k + self.kuw).min(n - 1);
            let mut acc = x[k];
            for j in (k + 1)..=jhi {
                acc -= at(k, j) * x[j];
            }
            x[k] = acc / at(k, k);
        }
    }
}
