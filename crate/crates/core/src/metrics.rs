//! Image quality metrics over normalized intensities: relative L2 error,
//! global-statistics structural similarity, and peak signal-to-noise ratio.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Real;

fn check_dims<T>(u: &[T], v: &[T]) -> Result<()> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "metric inputs must be nonempty and equal-sized, got {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(())
}

/// Relative L2 error `||u - v|| / ||v||`; `v` is the reference.
pub fn rrmse<T: Real>(u: &[T], v: &[T]) -> Result<T> {
    check_dims(u, v)?;
    let mut num = T::zero();
    let mut den = T::zero();
    for (&a, &b) in u.iter().zip(v) {
        let d = a - b;
        num += d * d;
        den += b * b;
    }
    if den == T::zero() {
        return Err(Error::ZeroReference);
    }
    Ok((num / den).sqrt())
}

/// Whole-image structural similarity: luminance, contrast and structure
/// factors from global means, variances and covariance, with stabilizers
/// C1 = (0.01 L)^2, C2 = (0.03 L)^2, C3 = C2/2 at dynamic range L = 1.
///
/// Variance and covariance come out of one shared accumulation loop, so
/// identical inputs yield identical statistics and SSIM exactly 1.
pub fn ssim<T: Real>(u: &[T], v: &[T]) -> Result<T> {
    check_dims(u, v)?;
    let n = T::from_usize_c(u.len());
    let mu_u = u.iter().cloned().sum::<T>() / n;
    let mu_v = v.iter().cloned().sum::<T>() / n;
    let mut var_u = T::zero();
    let mut var_v = T::zero();
    let mut cov = T::zero();
    for (&a, &b) in u.iter().zip(v) {
        let du = a - mu_u;
        let dv = b - mu_v;
        var_u += du * du;
        var_v += dv * dv;
        cov += du * dv;
    }
    var_u = var_u / n;
    var_v = var_v / n;
    cov = cov / n;
    let sigma_u_sigma_v = (var_u * var_v).sqrt();

    let two = T::from_f64_c(2.0);
    let c1 = T::from_f64_c(1e-4);
    let c2 = T::from_f64_c(9e-4);
    let c3 = c2 / two;
    let l = (two * mu_u * mu_v + c1) / (mu_u * mu_u + mu_v * mu_v + c1);
    let c = (two * sigma_u_sigma_v + c2) / (var_u + var_v + c2);
    let s = (cov + c3) / (sigma_u_sigma_v + c3);
    Ok(l * c * s)
}

/// Peak signal-to-noise ratio in dB against MAX = 1; identical inputs
/// return the infinity sentinel.
pub fn psnr<T: Real>(u: &[T], v: &[T]) -> Result<T> {
    check_dims(u, v)?;
    let n = T::from_usize_c(u.len());
    let mut acc = T::zero();
    for (&a, &b) in u.iter().zip(v) {
        let d = a - b;
        acc += d * d;
    }
    let mse = acc / n;
    if mse == T::zero() {
        return Ok(T::infinity());
    }
    let ten = T::from_f64_c(10.0);
    Ok(-ten * mse.log10())
}

/// Per-channel quality summary of a color image pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport<T> {
    /// Relative L2 error per channel in Y, Cr, Cb order.
    pub rrmse: [T; 3],
    /// Structural similarity of the luminance channel.
    pub ssim: T,
    /// PSNR of the luminance channel, dB.
    pub psnr: T,
}

/// Compares two RGB images in YCrCb space: RRMSE for each of the three
/// channels, SSIM and PSNR on luminance. `v` is the reference.
pub fn report_color<T: Real>(u: &Image<T>, v: &Image<T>) -> Result<QualityReport<T>> {
    if u.channels() != 3 || v.channels() != 3 {
        return Err(Error::ChannelMismatch {
            expected: 3,
            actual: if u.channels() != 3 { u.channels() } else { v.channels() },
        });
    }
    if u.width() != v.width() || u.height() != v.height() {
        return Err(Error::DimensionMismatch(format!(
            "image sizes differ: {}x{} vs {}x{}",
            u.width(),
            u.height(),
            v.width(),
            v.height()
        )));
    }
    let yu = u.rgb_to_ycrcb()?;
    let yv = v.rgb_to_ycrcb()?;
    let rrmse = [
        rrmse(yu.plane(0), yv.plane(0))?,
        rrmse(yu.plane(1), yv.plane(1))?,
        rrmse(yu.plane(2), yv.plane(2))?,
    ];
    Ok(QualityReport {
        rrmse,
        ssim: ssim(yu.plane(0), yv.plane(0))?,
        psnr: psnr(yu.plane(0), yv.plane(0))?,
    })
}
