//! Dense symmetric eigensolver: Householder reduction to tridiagonal form
//! followed by the implicit-shift QL iteration, both with eigenvector
//! accumulation. Used directly for small local problems and as the
//! Rayleigh-Ritz engine inside the Lanczos path.

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::eigen::EigenPairs;

#[inline]
fn sign_of<T: Real>(magnitude: T, sign: T) -> T {
    if sign >= T::zero() {
        magnitude.abs()
    } else {
        -magnitude.abs()
    }
}

/// Householder reduction of the symmetric row-major matrix `z` (overwritten
/// with the accumulated orthogonal transform) to tridiagonal form `(d, e)`,
/// with `e[0]` unused.
fn tred2<T: Real>(z: &mut [T], n: usize, d: &mut [T], e: &mut [T]) {
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = T::zero();
        if l > 0 {
            let mut scale = T::zero();
            for k in 0..=l {
                scale += z[i * n + k].abs();
            }
            if scale == T::zero() {
                e[i] = z[i * n + l];
            } else {
                for k in 0..=l {
                    z[i * n + k] = z[i * n + k] / scale;
                    h += z[i * n + k] * z[i * n + k];
                }
                let f = z[i * n + l];
                let g = if f >= T::zero() { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                z[i * n + l] = f - g;
                let mut f_sum = T::zero();
                for j in 0..=l {
                    z[j * n + i] = z[i * n + j] / h;
                    let mut g_sum = T::zero();
                    for k in 0..=j {
                        g_sum += z[j * n + k] * z[i * n + k];
                    }
                    for k in (j + 1)..=l {
                        g_sum += z[k * n + j] * z[i * n + k];
                    }
                    e[j] = g_sum / h;
                    f_sum += e[j] * z[i * n + j];
                }
                let hh = f_sum / (h + h);
                for j in 0..=l {
                    let f = z[i * n + j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        z[j * n + k] = z[j * n + k] - (f * e[k] + g * z[i * n + k]);
                    }
                }
            }
        } else {
            e[i] = z[i * n + l];
        }
        d[i] = h;
    }
    d[0] = T::zero();
    e[0] = T::zero();
    for i in 0..n {
        if d[i] != T::zero() {
            for j in 0..i {
                let mut g = T::zero();
                for k in 0..i {
                    g += z[i * n + k] * z[k * n + j];
                }
                for k in 0..i {
                    z[k * n + j] = z[k * n + j] - g * z[k * n + i];
                }
            }
        }
        d[i] = z[i * n + i];
        z[i * n + i] = T::one();
        for j in 0..i {
            z[j * n + i] = T::zero();
            z[i * n + j] = T::zero();
        }
    }
}

/// Implicit-shift QL on the tridiagonal `(d, e)` with `e[0]` unused;
/// rotations are accumulated into the columns of `z`. On success `d` holds
/// the (unsorted) eigenvalues and column `j` of `z` the matching vector.
fn tql2<T: Real>(d: &mut [T], e: &mut [T], z: &mut [T], n: usize) -> Result<()> {
    if n <= 1 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    for l in 0..n {
        let mut iter = 0usize;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::NonConvergence {
                    solver: "tql2",
                    iterations: iter,
                    residual: e[l].abs().to_f64_c(),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (e[l] + e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + sign_of(r, g));
            let mut s = T::one();
            let mut c = T::one();
            let mut p = T::zero();
            let mut i = m as isize - 1;
            let mut underflowed = false;
            while i >= l as isize {
                let iu = i as usize;
                let f = s * e[iu];
                let b = c * e[iu];
                r = f.hypot(g);
                e[iu + 1] = r;
                if r == T::zero() {
                    d[iu + 1] -= p;
                    e[m] = T::zero();
                    underflowed = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[iu + 1] - p;
                r = (d[iu] - g) * s + (c + c) * b;
                p = s * r;
                d[iu + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let f = z[k * n + iu + 1];
                    z[k * n + iu + 1] = s * z[k * n + iu] + c * f;
                    z[k * n + iu] = c * z[k * n + iu] - s * f;
                }
                i -= 1;
            }
            if underflowed && i >= l as isize {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok(())
}

fn sorted_pairs<T: Real>(d: &[T], z: &[T], n: usize) -> EigenPairs<T> {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("eigenvalue is NaN"));
    let values = order.iter().map(|&j| d[j]).collect();
    let vectors = order
        .iter()
        .map(|&j| (0..n).map(|k| z[k * n + j]).collect())
        .collect();
    EigenPairs { values, vectors }
}

/// Full eigendecomposition of a dense symmetric matrix (row-major, length
/// `n * n`). Eigenvalues ascending, eigenvectors orthonormal.
pub fn sym_eigen<T: Real>(a: &[T], n: usize) -> Result<EigenPairs<T>> {
    assert_eq!(a.len(), n * n, "matrix storage does not match dimension");
    if n == 0 {
        return Ok(EigenPairs {
            values: vec![],
            vectors: vec![],
        });
    }
    let mut z = a.to_vec();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(&mut z, n, &mut d, &mut e);
    tql2(&mut d, &mut e, &mut z, n)?;
    Ok(sorted_pairs(&d, &z, n))
}

/// Eigendecomposition of a symmetric tridiagonal matrix given its diagonal
/// and subdiagonal (`off.len() == diag.len() - 1`).
pub(crate) fn tridiag_eigen<T: Real>(diag: &[T], off: &[T]) -> Result<EigenPairs<T>> {
    let n = diag.len();
    assert_eq!(off.len(), n.saturating_sub(1));
    if n == 0 {
        return Ok(EigenPairs {
            values: vec![],
            vectors: vec![],
        });
    }
    let mut d = diag.to_vec();
    let mut e = vec![T::zero(); n];
    e[1..].copy_from_slice(off);
    let mut z = vec![T::zero(); n * n];
    for i in 0..n {
        z[i * n + i] = T::one();
    }
    tql2(&mut d, &mut e, &mut z, n)?;
    Ok(sorted_pairs(&d, &z, n))
}
