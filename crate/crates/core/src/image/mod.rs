//! Image container, color-space transforms, and synthetic noise injection.
//!
//! Pixel intensities live in `[0, 1]`. Multi-channel images are stored
//! planar: the full channel 0 plane first, then channel 1, and so on, each
//! plane row-major. Planar storage lets the solvers treat one channel as a
//! contiguous slice.

mod io;

pub use io::{load_image, save_image};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Real;

// BT.601 luma weights, full-range.
const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;
const CR_SCALE: f64 = 0.5 / (1.0 - KR);
const CB_SCALE: f64 = 0.5 / (1.0 - KB);

#[inline]
pub(crate) fn clamp01<T: Real>(v: T) -> T {
    if v < T::zero() {
        T::zero()
    } else if v > T::one() {
        T::one()
    } else {
        v
    }
}

/// Additive Gaussian noise scaled by the per-channel RMS intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    level: f64,
    seed: u64,
}

impl NoiseSpec {
    pub fn new(level: f64, seed: u64) -> Result<Self> {
        if !(level > 0.0) || !level.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise level must be positive and finite, got {level}"
            )));
        }
        Ok(Self { level, seed })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Planar intensity image with 1 (grayscale) or 3 (color) channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> Image<T> {
    /// Wraps planar channel data. `data.len()` must equal
    /// `width * height * channels` and `channels` must be 1 or 3.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                actual: channels,
            });
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height}x{channels} image needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, channels: usize, value: T) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Pixels per channel.
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn plane(&self, channel: usize) -> &[T] {
        assert!(channel < self.channels, "channel out of range");
        let n = self.pixel_count();
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn plane_mut(&mut self, channel: usize) -> &mut [T] {
        assert!(channel < self.channels, "channel out of range");
        let n = self.pixel_count();
        &mut self.data[channel * n..(channel + 1) * n]
    }

    pub fn get(&self, x: usize, y: usize, channel: usize) -> T {
        self.plane(channel)[y * self.width + x]
    }

    /// Rebuilds the image with one channel plane replaced.
    pub fn with_plane(&self, channel: usize, plane: Vec<T>) -> Result<Self> {
        if plane.len() != self.pixel_count() {
            return Err(Error::DimensionMismatch(format!(
                "plane has {} values, image needs {}",
                plane.len(),
                self.pixel_count()
            )));
        }
        let mut out = self.clone();
        out.plane_mut(channel).copy_from_slice(&plane);
        Ok(out)
    }

    /// BT.601 full-range luma; identity for grayscale input.
    pub fn to_grayscale(&self) -> Image<T> {
        if self.channels == 1 {
            return self.clone();
        }
        let n = self.pixel_count();
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        let (kr, kg, kb) = (T::from_f64_c(KR), T::from_f64_c(KG), T::from_f64_c(KB));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            y.push(kr * r[i] + kg * g[i] + kb * b[i]);
        }
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data: y,
        }
    }

    /// BT.601 full-range RGB -> YCrCb with chroma offset +0.5.
    pub fn rgb_to_ycrcb(&self) -> Result<Image<T>> {
        if self.channels != 3 {
            return Err(Error::ChannelMismatch {
                expected: 3,
                actual: self.channels,
            });
        }
        let n = self.pixel_count();
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        let (kr, kg, kb) = (T::from_f64_c(KR), T::from_f64_c(KG), T::from_f64_c(KB));
        let cr_s = T::from_f64_c(CR_SCALE);
        let cb_s = T::from_f64_c(CB_SCALE);
        let half = T::from_f64_c(0.5);
        let mut data = vec![T::zero(); 3 * n];
        let (yp, rest) = data.split_at_mut(n);
        let (crp, cbp) = rest.split_at_mut(n);
        for i in 0..n {
            let y = kr * r[i] + kg * g[i] + kb * b[i];
            yp[i] = y;
            crp[i] = (r[i] - y) * cr_s + half;
            cbp[i] = (b[i] - y) * cb_s + half;
        }
        Ok(Image {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        })
    }

    /// Inverse of [`Image::rgb_to_ycrcb`]; output clamped to `[0, 1]`.
    pub fn ycrcb_to_rgb(&self) -> Result<Image<T>> {
        if self.channels != 3 {
            return Err(Error::ChannelMismatch {
                expected: 3,
                actual: self.channels,
            });
        }
        let n = self.pixel_count();
        let (yp, crp, cbp) = (self.plane(0), self.plane(1), self.plane(2));
        let (kr, kg, kb) = (T::from_f64_c(KR), T::from_f64_c(KG), T::from_f64_c(KB));
        let cr_s = T::from_f64_c(CR_SCALE);
        let cb_s = T::from_f64_c(CB_SCALE);
        let half = T::from_f64_c(0.5);
        let mut data = vec![T::zero(); 3 * n];
        let (rp, rest) = data.split_at_mut(n);
        let (gp, bp) = rest.split_at_mut(n);
        for i in 0..n {
            let y = yp[i];
            let r = y + (crp[i] - half) / cr_s;
            let b = y + (cbp[i] - half) / cb_s;
            let g = (y - kr * r - kb * b) / kg;
            rp[i] = clamp01(r);
            gp[i] = clamp01(g);
            bp[i] = clamp01(b);
        }
        Ok(Image {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        })
    }

    /// Adds seeded Gaussian noise with standard deviation
    /// `level * rms(channel)` independently per channel, then clamps to
    /// `[0, 1]`. Bitwise deterministic for a fixed spec.
    pub fn add_noise(&self, spec: &NoiseSpec) -> Image<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let n = self.pixel_count();
        let level = T::from_f64_c(spec.level);
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.channels {
            let plane = self.plane(c);
            let mut sq = T::zero();
            for &v in plane {
                sq += v * v;
            }
            let rms = (sq / T::from_usize_c(n)).sqrt();
            let sigma = level * rms;
            for &v in plane {
                let xi: f64 = StandardNormal.sample(&mut rng);
                data.push(clamp01(v + sigma * T::from_f64_c(xi)));
            }
        }
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn new_validates_shape() {
        assert!(Image::<f64>::new(2, 2, 1, vec![0.0; 4]).is_ok());
        assert!(matches!(
            Image::<f64>::new(2, 2, 1, vec![0.0; 5]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            Image::<f64>::new(2, 2, 2, vec![0.0; 8]),
            Err(Error::ChannelMismatch { .. })
        ));
        assert!(Image::<f64>::new(0, 2, 1, vec![]).is_err());
    }

    #[test]
    fn planes_are_contiguous_and_ordered() {
        let data: Vec<f64> = (0..12).map(|v| v as f64 / 12.0).collect();
        let img = Image::new(2, 2, 3, data.clone()).unwrap();
        assert_eq!(img.plane(0), &data[0..4]);
        assert_eq!(img.plane(2), &data[8..12]);
        assert_eq!(img.get(1, 0, 1), data[5]);
    }

    #[test]
    fn pure_red_ycrcb() {
        let mut data = vec![0.0f64; 12];
        data[0..4].fill(1.0);
        let img = Image::new(2, 2, 3, data).unwrap();
        let ycc = img.rgb_to_ycrcb().unwrap();
        assert!(close(ycc.get(0, 0, 0), 0.299, 1e-15));
        assert!(close(ycc.get(0, 0, 1), 1.0, 1e-15));
        assert!(close(ycc.get(0, 0, 2), 0.5 - 0.299 * CB_SCALE, 1e-15));
        assert!(close(ycc.get(0, 0, 2), 0.331264108352144, 1e-12));
    }

    #[test]
    fn gray_pixel_has_neutral_chroma() {
        let img = Image::new(1, 1, 3, vec![0.25f64, 0.25, 0.25]).unwrap();
        let ycc = img.rgb_to_ycrcb().unwrap();
        assert!(close(ycc.get(0, 0, 0), 0.25, 1e-15));
        assert!(close(ycc.get(0, 0, 1), 0.5, 1e-15));
        assert!(close(ycc.get(0, 0, 2), 0.5, 1e-15));
    }

    #[test]
    fn to_grayscale_matches_luma_weights() {
        let img = Image::new(1, 1, 3, vec![1.0f64, 0.5, 0.25]).unwrap();
        let gray = img.to_grayscale();
        assert_eq!(gray.channels(), 1);
        assert!(close(gray.get(0, 0, 0), 0.299 + 0.587 * 0.5 + 0.114 * 0.25, 1e-15));
        let already = gray.to_grayscale();
        assert_eq!(already, gray);
    }

    #[test]
    fn ycrcb_roundtrip_identity() {
        let data: Vec<f64> = (0..27).map(|v| v as f64 / 26.0).collect();
        let img = Image::new(3, 3, 3, data).unwrap();
        let back = img.rgb_to_ycrcb().unwrap().ycrcb_to_rgb().unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!(close(*a, *b, 1e-12));
        }
    }

    proptest! {
        #[test]
        fn ycrcb_roundtrip_property(values in proptest::collection::vec(0.0f64..=1.0, 12)) {
            let img = Image::new(2, 2, 3, values).unwrap();
            let back = img.rgb_to_ycrcb().unwrap().ycrcb_to_rgb().unwrap();
            for (a, b) in img.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn noise_is_deterministic_and_seed_sensitive() {
        let img = Image::constant(8, 8, 1, 0.5f64).unwrap();
        let spec = NoiseSpec::new(0.2, 42).unwrap();
        let a = img.add_noise(&spec);
        let b = img.add_noise(&spec);
        assert_eq!(a.data(), b.data());
        let other = img.add_noise(&NoiseSpec::new(0.2, 43).unwrap());
        assert_ne!(a.data(), other.data());
    }

    #[test]
    fn noise_level_sets_sample_stddev() {
        // Constant 0.5 image: rms = 0.5, so sigma = 0.2 * 0.5 = 0.1. With
        // 256x256 samples the sample stddev lands within 5% of that before
        // clamping ever matters (|xi| < 5 here).
        let img = Image::constant(256, 256, 1, 0.5f64).unwrap();
        let noisy = img.add_noise(&NoiseSpec::new(0.2, 7).unwrap());
        let n = noisy.pixel_count() as f64;
        let mean: f64 = noisy.data().iter().sum::<f64>() / n;
        let var: f64 = noisy
            .data()
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n;
        let sd = var.sqrt();
        assert!(
            (sd - 0.1).abs() < 0.005,
            "sample stddev {sd} not near 0.1"
        );
    }

    #[test]
    fn noise_vanishes_with_level() {
        let img = Image::constant(4, 4, 1, 0.5f64).unwrap();
        let noisy = img.add_noise(&NoiseSpec::new(1e-12, 1).unwrap());
        for (a, b) in img.data().iter().zip(noisy.data()) {
            assert!(close(*a, *b, 1e-11));
        }
    }

    #[test]
    fn noise_output_stays_in_range() {
        let img = Image::constant(16, 16, 1, 0.95f64).unwrap();
        let noisy = img.add_noise(&NoiseSpec::new(0.5, 3).unwrap());
        assert!(noisy.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn noise_spec_rejects_bad_level() {
        assert!(NoiseSpec::new(0.0, 1).is_err());
        assert!(NoiseSpec::new(-0.1, 1).is_err());
        assert!(NoiseSpec::new(f64::NAN, 1).is_err());
    }

    #[test]
    fn f32_pipeline_smoke() {
        let img = Image::<f32>::new(2, 2, 3, vec![0.25f32; 12]).unwrap();
        let back = img.rgb_to_ycrcb().unwrap().ycrcb_to_rgb().unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }
}
