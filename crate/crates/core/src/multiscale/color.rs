//! Color denoising: one basis from the luminance channel drives the coarse
//! solver on all three YCrCb channels.

use crate::error::{Error, Result};
use crate::fine::{SolverOptions, TimeScheme};
use crate::fvm::PixelGrid;
use crate::image::Image;
use crate::multiscale::basis::{
    build_node_eigenpairs, build_projection, BasisConfig, MultiscaleBasis,
};
use crate::multiscale::coarse::{coarse_denoise_with, CoarseMode};
use crate::multiscale::grid::{partition_of_unity, CoarseGrid};
use crate::scalar::Real;

/// End-to-end multiscale configuration: coarse layout, basis size, offline
/// parameters and the online scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsConfig<T> {
    pub coarse_cell_px: usize,
    pub m: usize,
    pub lambda: T,
    pub t_max: T,
    pub n_steps: usize,
    pub mode: CoarseMode,
    pub basis: BasisConfig<T>,
    pub solver: SolverOptions<T>,
}

impl<T: Real> Default for MsConfig<T> {
    fn default() -> Self {
        Self {
            coarse_cell_px: 32,
            m: 16,
            lambda: T::from_f64_c(0.3),
            t_max: T::from_f64_c(5.0),
            n_steps: 5,
            mode: CoarseMode::Auto,
            basis: BasisConfig::default(),
            solver: SolverOptions::default(),
        }
    }
}

/// Offline stage for a single channel: local denoising, spectral problems
/// and the hat-weighted projection rows.
pub fn build_basis_for_channel<T: Real>(
    channel: &[T],
    width: usize,
    height: usize,
    cfg: &MsConfig<T>,
) -> Result<MultiscaleBasis<T>> {
    let grid = PixelGrid::new(width, height)?;
    let cg = CoarseGrid::build(width, height, cfg.coarse_cell_px)?;
    let pairs = build_node_eigenpairs(channel, &grid, &cg, cfg.m, &cfg.basis)?;
    let pou = partition_of_unity::<T>(&cg);
    build_projection(&cg, &pou, &pairs, cfg.m)
}

/// Denoises an RGB image through YCrCb with a shared luminance-built basis.
pub fn denoise_color<T: Real>(img: &Image<T>, cfg: &MsConfig<T>) -> Result<Image<T>> {
    if img.channels() != 3 {
        return Err(Error::ChannelMismatch {
            expected: 3,
            actual: img.channels(),
        });
    }
    let ycc = img.rgb_to_ycrcb()?;
    let basis = build_basis_for_channel(ycc.plane(0), img.width(), img.height(), cfg)?;
    denoise_ycrcb(&ycc, &basis, cfg)?.ycrcb_to_rgb()
}

/// [`denoise_color`] with a prebuilt basis (for example one loaded from
/// disk); the basis dimensions must match the image.
pub fn denoise_color_with_basis<T: Real>(
    img: &Image<T>,
    basis: &MultiscaleBasis<T>,
    cfg: &MsConfig<T>,
) -> Result<Image<T>> {
    if img.channels() != 3 {
        return Err(Error::ChannelMismatch {
            expected: 3,
            actual: img.channels(),
        });
    }
    let ycc = img.rgb_to_ycrcb()?;
    denoise_ycrcb(&ycc, basis, cfg)?.ycrcb_to_rgb()
}

/// Runs the coarse solver independently on each channel of a YCrCb image.
/// Channels share nothing but the immutable basis, so the per-channel
/// results do not depend on evaluation order.
fn denoise_ycrcb<T: Real>(
    ycc: &Image<T>,
    basis: &MultiscaleBasis<T>,
    cfg: &MsConfig<T>,
) -> Result<Image<T>> {
    let scheme = TimeScheme::new(cfg.t_max, cfg.n_steps)?;
    let mut data = Vec::with_capacity(ycc.data().len());
    for c in 0..ycc.channels() {
        let plane = coarse_denoise_with(
            ycc.plane(c),
            basis,
            &scheme,
            cfg.lambda,
            &cfg.solver,
            cfg.mode,
            |_, _| {},
        )?;
        data.extend(plane);
    }
    Image::new(ycc.width(), ycc.height(), ycc.channels(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::NoiseSpec;
    use crate::metrics::ssim;
    use crate::synth::{geometric_color, geometric_gray};

    fn small_cfg() -> MsConfig<f64> {
        MsConfig {
            coarse_cell_px: 8,
            m: 4,
            n_steps: 3,
            ..MsConfig::default()
        }
    }

    #[test]
    fn grayscale_content_stays_grayscale() {
        let gray = geometric_gray::<f64>(32, 32).unwrap();
        let noisy = gray.add_noise(&NoiseSpec::new(0.2, 5).unwrap());
        let plane = noisy.plane(0).to_vec();
        let mut data = plane.clone();
        data.extend_from_slice(&plane);
        data.extend_from_slice(&plane);
        let rgb = Image::new(32, 32, 3, data).unwrap();
        let out = denoise_color(&rgb, &small_cfg()).unwrap();
        for p in 0..out.pixel_count() {
            let r = out.plane(0)[p];
            let g = out.plane(1)[p];
            let b = out.plane(2)[p];
            assert!((r - g).abs() <= 1e-6 && (r - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn matches_manual_per_channel_runs() {
        let clean = geometric_color::<f64>(32, 32).unwrap();
        let noisy = clean.add_noise(&NoiseSpec::new(0.15, 2).unwrap());
        let cfg = small_cfg();
        let ycc = noisy.rgb_to_ycrcb().unwrap();
        let basis = build_basis_for_channel(ycc.plane(0), 32, 32, &cfg).unwrap();

        let auto = denoise_color_with_basis(&noisy, &basis, &cfg).unwrap();

        let scheme = TimeScheme::new(cfg.t_max, cfg.n_steps).unwrap();
        // Assemble the same result channel by channel, in reverse order.
        let mut planes = vec![Vec::new(); 3];
        for c in (0..3).rev() {
            planes[c] = coarse_denoise_with(
                ycc.plane(c),
                &basis,
                &scheme,
                cfg.lambda,
                &cfg.solver,
                cfg.mode,
                |_, _| {},
            )
            .unwrap();
        }
        let manual = Image::new(32, 32, 3, planes.concat())
            .unwrap()
            .ycrcb_to_rgb()
            .unwrap();
        assert_eq!(auto.data(), manual.data());
    }

    #[test]
    fn noisy_color_ssim_improves() {
        let clean = geometric_color::<f64>(64, 64).unwrap();
        let noisy = clean.add_noise(&NoiseSpec::new(0.2, 9).unwrap());
        let out = denoise_color(&noisy, &small_cfg()).unwrap();
        let y_clean = clean.rgb_to_ycrcb().unwrap();
        let y_noisy = noisy.rgb_to_ycrcb().unwrap();
        let y_out = out.rgb_to_ycrcb().unwrap();
        let before = ssim(y_noisy.plane(0), y_clean.plane(0)).unwrap();
        let after = ssim(y_out.plane(0), y_clean.plane(0)).unwrap();
        assert!(after > before, "ssim {before} -> {after}");
    }

    #[test]
    fn rejects_non_color_images() {
        let gray = geometric_gray::<f64>(16, 16).unwrap();
        assert!(matches!(
            denoise_color(&gray, &MsConfig::default()),
            Err(Error::ChannelMismatch {
                expected: 3,
                actual: 1
            })
        ));
    }
}
