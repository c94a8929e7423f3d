//! Reading and writing images as PNG or binary PGM/PPM.
//!
//! Loading maps 8-bit samples through `v / 255` and 16-bit samples through
//! `v / 65535`. Saving clamps to `[0, 1]` and quantizes to 8 bits with
//! round-half-away-from-zero.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::Image;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn planar_from_interleaved<T: Real>(
    samples: &[u8],
    channels: usize,
    scale: f64,
) -> Vec<T> {
    let n = samples.len() / channels;
    let mut data = vec![T::zero(); samples.len()];
    for (i, px) in samples.chunks_exact(channels).enumerate() {
        for (c, &s) in px.iter().enumerate() {
            data[c * n + i] = T::from_f64_c(f64::from(s) / scale);
        }
    }
    data
}

fn planar_from_interleaved_u16<T: Real>(samples: &[u16], channels: usize) -> Vec<T> {
    let n = samples.len() / channels;
    let mut data = vec![T::zero(); samples.len()];
    for (i, px) in samples.chunks_exact(channels).enumerate() {
        for (c, &s) in px.iter().enumerate() {
            data[c * n + i] = T::from_f64_c(f64::from(s) / 65535.0);
        }
    }
    data
}

/// Loads a PNG, PGM or PPM image into `[0, 1]` intensities. Grayscale
/// sources produce 1 channel, RGB sources 3; alpha or exotic layouts are
/// rejected.
pub fn load_image<T: Real>(path: &Path) -> Result<Image<T>> {
    use ::image::DynamicImage;

    let reader = ::image::ImageReader::open(path).map_err(|e| io_err(path, e))?;
    let decoded = reader.decode().map_err(|e| match e {
        ::image::ImageError::Unsupported(u) => Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: u.to_string(),
        },
        ::image::ImageError::IoError(io) => io_err(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;

    let width = decoded.width() as usize;
    let height = decoded.height() as usize;
    let (channels, data) = match decoded {
        DynamicImage::ImageLuma8(buf) => (1, planar_from_interleaved(buf.as_raw(), 1, 255.0)),
        DynamicImage::ImageRgb8(buf) => (3, planar_from_interleaved(buf.as_raw(), 3, 255.0)),
        DynamicImage::ImageLuma16(buf) => (1, planar_from_interleaved_u16(buf.as_raw(), 1)),
        DynamicImage::ImageRgb16(buf) => (3, planar_from_interleaved_u16(buf.as_raw(), 3)),
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("pixel layout {:?} (alpha and float images are not supported)", other.color()),
            })
        }
    };
    Image::new(width, height, channels, data)
}

fn quantize<T: Real>(v: T) -> u8 {
    let clamped = super::clamp01(v).to_f64_c();
    // round() is round-half-away-from-zero.
    (clamped * 255.0).round() as u8
}

fn interleave_quantized<T: Real>(img: &Image<T>) -> Vec<u8> {
    let n = img.pixel_count();
    let channels = img.channels();
    let mut out = vec![0u8; n * channels];
    for c in 0..channels {
        let plane = img.plane(c);
        for i in 0..n {
            out[i * channels + c] = quantize(plane[i]);
        }
    }
    out
}

/// Saves as 8-bit PNG, binary PGM (grayscale only) or binary PPM (color
/// only), chosen by file extension.
pub fn save_image<T: Real>(img: &Image<T>, path: &Path) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();

    match ext.as_str() {
        "png" => save_png(img, path),
        "pgm" => {
            if img.channels() != 1 {
                return Err(Error::UnsupportedFormat {
                    path: path.to_path_buf(),
                    reason: "PGM holds a single channel; use PPM or PNG for color".into(),
                });
            }
            save_pnm(img, path, b"P5")
        }
        "ppm" => {
            if img.channels() != 3 {
                return Err(Error::UnsupportedFormat {
                    path: path.to_path_buf(),
                    reason: "PPM holds three channels; use PGM or PNG for grayscale".into(),
                });
            }
            save_pnm(img, path, b"P6")
        }
        other => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("unknown extension {other:?}; supported: png, pgm, ppm"),
        }),
    }
}

fn save_png<T: Real>(img: &Image<T>, path: &Path) -> Result<()> {
    let samples = interleave_quantized(img);
    let width = img.width() as u32;
    let height = img.height() as u32;
    let color = if img.channels() == 1 {
        ::image::ExtendedColorType::L8
    } else {
        ::image::ExtendedColorType::Rgb8
    };
    ::image::save_buffer(path, &samples, width, height, color).map_err(|e| match e {
        ::image::ImageError::IoError(io) => io_err(path, io),
        other => Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })
}

fn save_pnm<T: Real>(img: &Image<T>, path: &Path, magic: &[u8]) -> Result<()> {
    let samples = interleave_quantized(img);
    let mut payload = Vec::with_capacity(samples.len() + 32);
    payload.extend_from_slice(magic);
    payload
        .write_all(format!("\n{} {}\n255\n", img.width(), img.height()).as_bytes())
        .expect("in-memory write");
    payload.extend_from_slice(&samples);
    fs::write(path, payload).map_err(|e| io_err(path, e))
}
