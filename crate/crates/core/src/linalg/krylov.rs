use rayon::prelude::*;

use super::{dot, norm2, CsrMatrix, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct KrylovOptions {
    /// Stop once `‖r‖ / ‖b‖ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final relative residual.
    pub residual: f64,
}

fn inverse_diagonal<T: Scalar>(a: &CsrMatrix<T>) -> Result<Vec<T>> {
    a.diagonal()
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            if d == T::zero() || !d.is_finite() {
                Err(Error::SingularDiagonal { row: i })
            } else {
                Ok(T::one() / d)
            }
        })
        .collect()
}

fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    y.par_iter_mut().zip(x.par_iter()).for_each(|(yi, &xi)| *yi = *yi + alpha * xi);
}

fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Conjugate gradients with Jacobi preconditioning for SPD matrices.
pub fn pcg<T: Scalar>(a: &CsrMatrix<T>, b: &[T], x0: Option<&[T]>, opts: &KrylovOptions) -> Result<(Vec<T>, SolveStats)> {
    let n = b.len();
    let dinv = inverse_diagonal(a)?;
    let mut x = x0.map_or_else(|| vec![T::zero(); n], <[T]>::to_vec);
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        return Ok((vec![T::zero(); n], SolveStats { iterations: 0, residual: 0.0 }));
    }
    let tol = T::from_f64_lossy(opts.tol) * bnorm;

    let mut r = a.mul_vec(&x);
    r.par_iter_mut().zip(b.par_iter()).for_each(|(ri, &bi)| *ri = bi - *ri);
    let mut z: Vec<T> = r.iter().zip(&dinv).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    let mut rnorm = norm2(&r);
    let mut it = 0;
    while rnorm > tol {
        if it >= opts.max_iter {
            return Err(Error::NotConverged { iterations: it, residual: to_f64(rnorm / bnorm) });
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= T::zero() {
            return Err(Error::Breakdown { iterations: it, residual: to_f64(rnorm / bnorm) });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        z.par_iter_mut()
            .zip(r.par_iter().zip(dinv.par_iter()))
            .for_each(|(zi, (&ri, &di))| *zi = ri * di);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(z.par_iter()).for_each(|(pi, &zi)| *pi = zi + beta * *pi);
        rnorm = norm2(&r);
        it += 1;
    }
    Ok((x, SolveStats { iterations: it, residual: to_f64(rnorm / bnorm) }))
}

/// BiCGStab with right Jacobi preconditioning for general square matrices.
pub fn bicgstab<T: Scalar>(
    a: &CsrMatrix<T>,
    b: &[T],
    x0: Option<&[T]>,
    opts: &KrylovOptions,
) -> Result<(Vec<T>, SolveStats)> {
    let n = b.len();
    let dinv = inverse_diagonal(a)?;
    let mut x = x0.map_or_else(|| vec![T::zero(); n], <[T]>::to_vec);
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        return Ok((vec![T::zero(); n], SolveStats { iterations: 0, residual: 0.0 }));
    }
    let tol = T::from_f64_lossy(opts.tol) * bnorm;
    let precond = |v: &[T]| -> Vec<T> { v.iter().zip(&dinv).map(|(&vi, &di)| vi * di).collect() };

    let mut r = a.mul_vec(&x);
    r.iter_mut().zip(b).for_each(|(ri, &bi)| *ri = bi - *ri);
    let r_hat = r.clone();
    let mut rho = T::one();
    let mut alpha = T::one();
    let mut omega = T::one();
    let mut v = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut rnorm = norm2(&r);
    let mut it = 0;
    while rnorm > tol {
        if it >= opts.max_iter {
            return Err(Error::NotConverged { iterations: it, residual: to_f64(rnorm / bnorm) });
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == T::zero() || omega == T::zero() {
            return Err(Error::Breakdown { iterations: it, residual: to_f64(rnorm / bnorm) });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = precond(&p);
        a.mul_vec_into(&p_hat, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == T::zero() {
            return Err(Error::Breakdown { iterations: it, residual: to_f64(rnorm / bnorm) });
        }
        alpha = rho / rv;
        let mut s = r.clone();
        axpy(-alpha, &v, &mut s);
        let snorm = norm2(&s);
        if snorm <= tol {
            axpy(alpha, &p_hat, &mut x);
            it += 1;
            break;
        }
        let s_hat = precond(&s);
        let t = a.mul_vec(&s_hat);
        let tt = dot(&t, &t);
        omega = if tt > T::zero() { dot(&t, &s) / tt } else { T::zero() };
        axpy(alpha, &p_hat, &mut x);
        axpy(omega, &s_hat, &mut x);
        r = s;
        axpy(-omega, &t, &mut r);
        rnorm = norm2(&r);
        it += 1;
    }
    // recompute the true residual; the recurrence can drift
    let mut rt = a.mul_vec(&x);
    rt.iter_mut().zip(b).for_each(|(ri, &bi)| *ri = bi - *ri);
    let true_res = to_f64(norm2(&rt) / bnorm);
    if true_res > opts.tol * 10.0 {
        return Err(Error::NotConverged { iterations: it, residual: true_res });
    }
    Ok((x, SolveStats { iterations: it, residual: true_res }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> KrylovOptions {
        KrylovOptions { tol: 1e-12, max_iter: 100 }
    }

    #[test]
    fn identity_returns_rhs() {
        let a = CsrMatrix::<f64>::identity(4);
        let b = vec![1.0, -2.0, 3.0, 0.5];
        let (x, _) = pcg(&a, &b, None, &opts()).unwrap();
        assert_eq!(x, b);
        let (x, _) = bicgstab(&a, &b, None, &opts()).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn two_by_two_by_hand() {
        // 2+1 = 3, 1+3 = 4
        let a = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let (x, st): (Vec<f64>, _) = pcg(&a, &[3.0, 4.0], None, &opts()).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        assert!(st.residual <= 1e-12);
        let (x, _): (Vec<f64>, _) = bicgstab(&a, &[3.0, 4.0], None, &opts()).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let a = CsrMatrix::from_dense(&[vec![2.0f32, 1.0], vec![1.0, 3.0]]);
        let o = KrylovOptions { tol: 1e-6, max_iter: 10 };
        let (x, _) = pcg(&a, &[3.0, 4.0], None, &o).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn zero_diagonal_is_reported() {
        let a = CsrMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 3.0]]);
        let err = pcg(&a, &[1.0, 1.0], None, &opts()).unwrap_err();
        assert!(matches!(err, Error::SingularDiagonal { row: 0 }));
    }

    #[test]
    fn nonconvergence_reports_residual() {
        let n = 50;
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            rows[i][i] = 2.0;
            if i > 0 {
                rows[i][i - 1] = -1.0;
                rows[i - 1][i] = -1.0;
            }
        }
        let a = CsrMatrix::from_dense(&rows);
        let b = vec![1.0; n];
        let o = KrylovOptions { tol: 1e-14, max_iter: 3 };
        match pcg(&a, &b, None, &o) {
            Err(Error::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-14);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bicgstab_nonsymmetric() {
        let a = CsrMatrix::from_dense(&[
            vec![4.0, 1.0, 0.0],
            vec![-2.0, 5.0, 1.0],
            vec![0.0, 3.0, 6.0],
        ]);
        let xs = [1.0f64, -1.0, 2.0];
        let b = a.mul_vec(&xs);
        let (x, _) = bicgstab(&a, &b, None, &opts()).unwrap();
        for (u, v) in x.iter().zip(xs) {
            assert!((u - v).abs() < 1e-10);
        }
    }
}
