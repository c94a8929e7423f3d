//! Floating-point scalar abstraction for the numerical kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type the solvers and image pipeline are generic over.
///
/// Implemented for `f32` and `f64`. Constants, tolerances and file payloads
/// are specified in `f64` and cross the type boundary through
/// [`Real::from_f64_c`] / [`Real::to_f64_c`].
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64_c(v: f64) -> Self;

    fn to_f64_c(self) -> f64;

    /// Lossy conversion from `usize`, used for averages and norms.
    #[inline]
    fn from_usize_c(v: usize) -> Self {
        Self::from_f64_c(v as f64)
    }

    /// Dense product `C = A * B^T` with row-major `A` (`m x k`), `B` (`n x k`)
    /// and `C` (`m x n`). `C` is overwritten.
    fn gemm_nt(m: usize, n: usize, k: usize, a: &[Self], b: &[Self], c: &mut [Self]);
}

impl Real for f32 {
    #[inline]
    fn from_f64_c(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to_f64_c(self) -> f64 {
        f64::from(self)
    }

    fn gemm_nt(m: usize, n: usize, k: usize, a: &[Self], b: &[Self], c: &mut [Self]) {
        assert_eq!(a.len(), m * k);
        assert_eq!(b.len(), n * k);
        assert_eq!(c.len(), m * n);
        if m == 0 || n == 0 {
            return;
        }
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                k as isize,
                1,
                b.as_ptr(),
                1,
                k as isize,
                0.0,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64_c(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64_c(self) -> f64 {
        self
    }

    fn gemm_nt(m: usize, n: usize, k: usize, a: &[Self], b: &[Self], c: &mut [Self]) {
        assert_eq!(a.len(), m * k);
        assert_eq!(b.len(), n * k);
        assert_eq!(c.len(), m * n);
        if m == 0 || n == 0 {
            return;
        }
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                k as isize,
                1,
                b.as_ptr(),
                1,
                k as isize,
                0.0,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}
