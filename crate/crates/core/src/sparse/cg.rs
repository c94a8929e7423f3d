//! Conjugate gradient solver for symmetric positive (semi-)definite systems.

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::SparseMatrix;

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Preconditioned conjugate gradients on any operator `apply(x, y)`
/// computing `y = A x`, with an optional warm start. The preconditioner
/// callback fills `z = M^{-1} r`. Converges when the true relative residual
/// `||b - A x|| / ||b||` drops to `tol`.
pub(crate) fn pcg_operator<T, F, P>(
    apply: F,
    n: usize,
    b: &[T],
    x0: Option<&[T]>,
    tol: T,
    max_iter: usize,
    precondition: P,
) -> Result<Vec<T>>
where
    T: Real,
    F: Fn(&[T], &mut [T]),
    P: Fn(&[T], &mut [T]),
{
    assert_eq!(b.len(), n);
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        return Ok(vec![T::zero(); n]);
    }
    let threshold = tol * bnorm;

    let (mut x, mut r) = match x0 {
        Some(guess) => {
            assert_eq!(guess.len(), n);
            let x = guess.to_vec();
            let mut ax = vec![T::zero(); n];
            apply(&x, &mut ax);
            let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
            (x, r)
        }
        None => (vec![T::zero(); n], b.to_vec()),
    };
    let rnorm0 = norm2(&r);
    if rnorm0 <= threshold {
        return Ok(x);
    }

    let mut z = vec![T::zero(); n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let mut last_rel = rnorm0 / bnorm;

    for iter in 0..max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= T::zero() {
            // Indefinite or fully converged direction; fall back to the true
            // residual check below.
            if norm2(&r) <= threshold {
                return Ok(x);
            }
            return Err(Error::NonConvergence {
                solver: "cg",
                iterations: iter,
                residual: (norm2(&r) / bnorm).to_f64_c(),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = norm2(&r);
        last_rel = rnorm / bnorm;
        if rnorm <= threshold {
            // Guard against drift of the recurrence residual.
            apply(&x, &mut ap);
            let mut true_res = T::zero();
            for i in 0..n {
                let d = b[i] - ap[i];
                true_res += d * d;
                r[i] = d;
            }
            let true_res = true_res.sqrt();
            last_rel = true_res / bnorm;
            if true_res <= threshold {
                return Ok(x);
            }
            precondition(&r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }
        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NonConvergence {
        solver: "cg",
        iterations: max_iter,
        residual: last_rel.to_f64_c(),
    })
}

/// Conjugate gradients from a zero initial guess with an optional Jacobi
/// preconditioner given as the diagonal of `A`.
pub(crate) fn cg_operator<T, F>(
    apply: F,
    n: usize,
    b: &[T],
    tol: T,
    max_iter: usize,
    precond_diag: Option<&[T]>,
) -> Result<Vec<T>>
where
    T: Real,
    F: Fn(&[T], &mut [T]),
{
    let inv_diag: Option<Vec<T>> = precond_diag.map(|d| {
        d.iter()
            .map(|&v| if v != T::zero() { T::one() / v } else { T::one() })
            .collect()
    });
    pcg_operator(apply, n, b, None, tol, max_iter, move |r, z| match &inv_diag {
        Some(inv) => {
            for i in 0..n {
                z[i] = inv[i] * r[i];
            }
        }
        None => z.copy_from_slice(r),
    })
}

/// Plain conjugate gradients. Deterministic: zero initial guess and a fixed
/// operation order.
pub fn cg_solve<T: Real>(
    a: &SparseMatrix<T>,
    b: &[T],
    tol: T,
    max_iter: usize,
) -> Result<Vec<T>> {
    if b.len() != a.n() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{} but rhs has {} entries",
            a.n(),
            a.n(),
            b.len()
        )));
    }
    cg_operator(|x, y| a.matvec_into(x, y), a.n(), b, tol, max_iter, None)
}

/// Jacobi-preconditioned conjugate gradients.
pub fn cg_solve_jacobi<T: Real>(
    a: &SparseMatrix<T>,
    b: &[T],
    tol: T,
    max_iter: usize,
) -> Result<Vec<T>> {
    if b.len() != a.n() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{} but rhs has {} entries",
            a.n(),
            a.n(),
            b.len()
        )));
    }
    let diag = a.diagonal();
    cg_operator(
        |x, y| a.matvec_into(x, y),
        a.n(),
        b,
        tol,
        max_iter,
        Some(&diag),
    )
}
