//! Nonlinear-diffusion image denoising with a spectral multiscale coarse solver.
//!
//! The crate implements the Perona-Malik diffusion model discretized by a
//! cell-centered finite volume scheme with implicit time stepping. Denoising
//! runs either at full pixel resolution ([`fine::denoise_fine`]) or through a
//! Galerkin projection onto a coarse space spanned by eigenvectors of local
//! spectral problems assembled on pre-denoised subdomains
//! ([`multiscale::coarse_denoise`]).
//!
//! Numerical kernels are generic over the scalar type via [`Real`]; `f64`
//! aliases for the main domain types are exported at the crate root.

pub mod error;
pub mod fine;
pub mod fvm;
pub mod image;
pub mod metrics;
pub mod multiscale;
pub mod scalar;
pub mod sparse;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ImageF64 = crate::image::Image<f64>;
pub type ImageF32 = crate::image::Image<f32>;
pub type SparseMatrixF64 = sparse::SparseMatrix<f64>;
pub type EigenPairsF64 = sparse::EigenPairs<f64>;
pub type TimeSchemeF64 = fine::TimeScheme<f64>;
pub type MultiscaleBasisF64 = multiscale::MultiscaleBasis<f64>;
