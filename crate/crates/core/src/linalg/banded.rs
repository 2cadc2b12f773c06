use super::{CsrMatrix, Scalar};
use crate::error::{Error, Result};

/// LU factorization with partial pivoting of a banded matrix.
///
/// Row `i` stores columns `i - kl ..= i + kl + ku`; the extra `kl` upper
/// diagonals absorb fill from row interchanges. The unit lower factor is kept
/// column by column in pivot order, as in LAPACK's `gbtrf`.
#[derive(Debug, Clone)]
pub struct BandedLu<T: Scalar = f64> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    upper: Vec<T>,
    lower: Vec<T>,
    pivots: Vec<usize>,
}

impl<T: Scalar> BandedLu<T> {
    /// Rough flop count of [`BandedLu::factor`] for this matrix.
    pub fn estimated_flops(a: &CsrMatrix<T>) -> f64 {
        let (kl, ku) = a.bandwidths();
        a.nrows() as f64 * (kl as f64 + 1.0) * (kl + ku + 1) as f64 * 2.0
    }

    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        assert_eq!(a.nrows(), a.ncols(), "banded LU needs a square matrix");
        let n = a.nrows();
        let (kl, ku) = a.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut upper = vec![T::zero(); n * width];
        let at = |r: usize, c: usize| r * width + (c + kl - r);
        for i in 0..n {
            for (j, v) in a.row(i) {
                upper[at(i, j)] = v;
            }
        }
        let mut lower = vec![T::zero(); n * kl.max(1)];
        let mut pivots = vec![0usize; n];
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut p = 0;
            let mut best = upper[at(j, j)].abs();
            for q in 1..=km {
                let v = upper[at(j + q, j)].abs();
                if v > best {
                    best = v;
                    p = q;
                }
            }
            pivots[j] = j + p;
            if best == T::zero() || !best.is_finite() {
                return Err(Error::SingularMatrix { column: j });
            }
            let last = (j + kl + ku).min(n - 1);
            if p != 0 {
                for c in j..=last {
                    upper.swap(at(j, c), at(j + p, c));
                }
            }
            let piv = upper[at(j, j)];
            for q in 1..=km {
                let r = j + q;
                let f = upper[at(r, j)] / piv;
                lower[j * kl + q - 1] = f;
                upper[at(r, j)] = T::zero();
                if f != T::zero() {
                    for c in (j + 1)..=last {
                        let u = upper[at(j, c)];
                        let idx = at(r, c);
                        upper[idx] = upper[idx] - f * u;
                    }
                }
            }
        }
        Ok(Self { n, kl, ku, width, upper, lower, pivots })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let (kl, ku, w) = (self.kl, self.ku, self.width);
        let mut x = b.to_vec();
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                x.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let xj = x[j];
            for q in 1..=km {
                x[j + q] = x[j + q] - self.lower[j * kl + q - 1] * xj;
            }
        }
        for i in (0..n).rev() {
            let last = (i + kl + ku).min(n - 1);
            let row = &self.upper[i * w..(i + 1) * w];
            let mut acc = x[i];
            for c in (i + 1)..=last {
                acc = acc - row[c + kl - i] * x[c];
            }
            x[i] = acc / row[kl];
        }
        x
    }
}
