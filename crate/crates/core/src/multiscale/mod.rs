//! Spectral multiscale machinery: coarse grids and hat functions, local
//! eigenbases, the projected online solver and basis persistence.

mod basis;
mod coarse;
mod color;
mod grid;
mod io;

pub use basis::{
    build_node_eigenpairs, build_projection, local_denoise, local_spectral_basis,
    restrict_channel, BasisConfig, MultiscaleBasis,
};
pub use coarse::{coarse_denoise, coarse_denoise_with, CoarseMode};
pub use color::{build_basis_for_channel, denoise_color, denoise_color_with_basis, MsConfig};
pub use grid::{partition_of_unity, CoarseGrid, PartitionOfUnity, PixelRect};
pub use io::{deserialize_basis, serialize_basis};
