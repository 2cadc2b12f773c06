//! Sparse linear algebra: CSR storage, Krylov solvers and a banded direct
//! factorization. Everything here is generic over the floating-point type.

mod banded;
mod csr;
mod krylov;
mod scalar;

pub use banded::BandedLu;
pub use csr::{CsrMatrix, TripletBuilder};
pub use krylov::{bicgstab, pcg, KrylovOptions, SolveStats};
pub use scalar::Scalar;

use crate::error::{Error, Result};

/// Block size for chunked reductions. The partial sums are combined in a
/// fixed order, so results do not depend on the number of worker threads.
const REDUCE_CHUNK: usize = 8192;

pub fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    use rayon::prelude::*;
    debug_assert_eq!(x.len(), y.len());
    if x.len() <= REDUCE_CHUNK {
        return x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
    }
    let partial: Vec<T> = x
        .par_chunks(REDUCE_CHUNK)
        .zip(y.par_chunks(REDUCE_CHUNK))
        .map(|(a, b)| a.iter().zip(b).fold(T::zero(), |acc, (&p, &q)| acc + p * q))
        .collect();
    partial.into_iter().fold(T::zero(), |acc, p| acc + p)
}

pub fn norm2<T: Scalar>(x: &[T]) -> T {
    dot(x, x).sqrt()
}

/// Which linear solver backs [`solve_sparse`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Banded LU when the estimated factorization cost is small, Krylov otherwise.
    Auto,
    Krylov,
    Direct,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub kind: SolverKind,
    /// Flop budget under which `Auto` picks the banded factorization.
    pub direct_budget: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 20_000,
            kind: SolverKind::Auto,
            direct_budget: 2.0e9,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Square system `A x = b`.
#[derive(Debug, Clone)]
pub struct SparseSystem<T: Scalar = f64> {
    pub matrix: CsrMatrix<T>,
    pub rhs: Vec<T>,
    pub symmetric: bool,
}

impl<T: Scalar> SparseSystem<T> {
    pub fn new(matrix: CsrMatrix<T>, rhs: Vec<T>, symmetric: bool) -> Self {
        assert_eq!(matrix.nrows(), rhs.len());
        Self { matrix, rhs, symmetric }
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// `‖b − A x‖ / ‖b‖` (absolute residual when `b = 0`).
    pub fn relative_residual(&self, x: &[T]) -> T {
        let mut r = self.matrix.mul_vec(x);
        for (ri, &bi) in r.iter_mut().zip(&self.rhs) {
            *ri = bi - *ri;
        }
        let bn = norm2(&self.rhs);
        let rn = norm2(&r);
        if bn > T::zero() {
            rn / bn
        } else {
            rn
        }
    }
}

/// Solve a finalized system. Symmetric systems go through preconditioned CG,
/// nonsymmetric ones through BiCGStab, both with Jacobi preconditioning;
/// small systems may be factorized directly instead.
pub fn solve_sparse<T: Scalar>(system: &SparseSystem<T>, cfg: &SolverConfig) -> Result<(Vec<T>, SolveStats)> {
    let n = system.dim();
    if n == 0 {
        return Ok((Vec::new(), SolveStats { iterations: 0, residual: 0.0 }));
    }
    let use_direct = match cfg.kind {
        SolverKind::Direct => true,
        SolverKind::Krylov => false,
        SolverKind::Auto => BandedLu::<T>::estimated_flops(&system.matrix) <= cfg.direct_budget,
    };
    if use_direct {
        let lu = BandedLu::factor(&system.matrix)?;
        let mut x = lu.solve(&system.rhs);
        let mut res = system.relative_residual(&x);
        // iterative refinement for badly scaled penalty systems
        for _ in 0..3 {
            if res.to_f64().unwrap_or(f64::INFINITY) <= cfg.tol {
                break;
            }
            let ax = system.matrix.mul_vec(&x);
            let r: Vec<T> = system.rhs.iter().zip(&ax).map(|(&b, &a)| b - a).collect();
            let dx = lu.solve(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi = *xi + d;
            }
            res = system.relative_residual(&x);
        }
        let residual = res.to_f64().unwrap_or(f64::INFINITY);
        if !(residual <= cfg.tol) {
            return Err(Error::NotConverged { iterations: 0, residual });
        }
        return Ok((x, SolveStats { iterations: 0, residual }));
    }
    let opts = KrylovOptions { tol: cfg.tol, max_iter: cfg.max_iter };
    if system.symmetric {
        pcg(&system.matrix, &system.rhs, None, &opts)
    } else {
        bicgstab(&system.matrix, &system.rhs, None, &opts)
    }
}
