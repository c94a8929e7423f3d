//! Cell-centered finite volume discretization of the nonlinear diffusion
//! operator on the pixel grid.
//!
//! Every pixel is a unit square cell (h = 1, unit face length and center
//! distance), so the two-point flux between neighbors reduces to the
//! harmonic average of their diffusion coefficients. Zero-flux boundaries
//! fall out naturally: faces on the image border simply contribute nothing.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sparse::{DiagonalMatrix, SparseMatrix};

/// Structured pixel grid; cells indexed row-major (`idx = y * nx + x`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelGrid {
    nx: usize,
    ny: usize,
}

impl PixelGrid {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid dimensions must be positive, got {nx}x{ny}"
            )));
        }
        Ok(Self { nx, ny })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny);
        y * self.nx + x
    }
}

/// Per-cell diffusion coefficient together with the edge threshold that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField<T> {
    values: Vec<T>,
    lambda: T,
}

impl<T: Real> CoefficientField<T> {
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }
}

/// Squared gradient magnitude per cell: central differences in the
/// interior, halved one-sided differences on the border (the central
/// stencil with the border value replicated).
pub fn gradient_sq<T: Real>(channel: &[T], grid: &PixelGrid) -> Result<Vec<T>> {
    if channel.len() != grid.cell_count() {
        return Err(Error::DimensionMismatch(format!(
            "channel has {} values but grid is {}x{}",
            channel.len(),
            grid.nx,
            grid.ny
        )));
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let half = T::from_f64_c(0.5);
    let mut out = vec![T::zero(); channel.len()];
    for y in 0..ny {
        for x in 0..nx {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(nx - 1);
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(ny - 1);
            let ix = (channel[grid.index(xp, y)] - channel[grid.index(xm, y)]) * half;
            let iy = (channel[grid.index(x, yp)] - channel[grid.index(x, ym)]) * half;
            out[grid.index(x, y)] = ix * ix + iy * iy;
        }
    }
    Ok(out)
}

/// Perona-Malik diffusion coefficient `c = 1 / (1 + g / lambda^2)`.
pub fn coefficient<T: Real>(grad_sq: &[T], lambda: T) -> Result<CoefficientField<T>> {
    if !(lambda > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "edge threshold lambda must be positive, got {lambda}"
        )));
    }
    let inv_l2 = T::one() / (lambda * lambda);
    let values = grad_sq
        .iter()
        .map(|&g| T::one() / (T::one() + g * inv_l2))
        .collect();
    Ok(CoefficientField { values, lambda })
}

/// Face transmissibility: harmonic average of the two adjacent cell
/// coefficients (unit face geometry).
pub fn transmissibility<T: Real>(c_i: T, c_j: T) -> Result<T> {
    if !(c_i > T::zero()) || !(c_j > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "transmissibility needs positive coefficients, got ({c_i}, {c_j})"
        )));
    }
    let two = T::from_f64_c(2.0);
    Ok(two / (T::one() / c_i + T::one() / c_j))
}

#[inline]
fn face_weight<T: Real>(c_i: T, c_j: T) -> T {
    let two = T::from_f64_c(2.0);
    two / (T::one() / c_i + T::one() / c_j)
}

/// Transmissibilities of all interior faces of the grid.
///
/// `horiz[y * (nx-1) + x]` couples cells `(x, y)` and `(x+1, y)`;
/// `vert[y * nx + x]` couples `(x, y)` and `(x, y+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceWeights<T> {
    nx: usize,
    ny: usize,
    horiz: Vec<T>,
    vert: Vec<T>,
}

impl<T: Real> FaceWeights<T> {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn horiz(&self, x: usize, y: usize) -> T {
        debug_assert!(x + 1 < self.nx);
        self.horiz[y * (self.nx - 1) + x]
    }

    #[inline]
    pub fn vert(&self, x: usize, y: usize) -> T {
        debug_assert!(y + 1 < self.ny);
        self.vert[y * self.nx + x]
    }
}

/// Computes every interior face weight from a coefficient field.
pub fn face_weights<T: Real>(
    coeff: &CoefficientField<T>,
    grid: &PixelGrid,
) -> Result<FaceWeights<T>> {
    let c = coeff.values();
    if c.len() != grid.cell_count() {
        return Err(Error::DimensionMismatch(format!(
            "coefficient field has {} values but grid is {}x{}",
            c.len(),
            grid.nx,
            grid.ny
        )));
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let mut horiz = vec![T::zero(); (nx - 1) * ny];
    let mut vert = vec![T::zero(); nx * (ny - 1)];
    for y in 0..ny {
        for x in 0..nx - 1 {
            horiz[y * (nx - 1) + x] = face_weight(c[grid.index(x, y)], c[grid.index(x + 1, y)]);
        }
    }
    for y in 0..ny - 1 {
        for x in 0..nx {
            vert[y * nx + x] = face_weight(c[grid.index(x, y)], c[grid.index(x, y + 1)]);
        }
    }
    Ok(FaceWeights {
        nx,
        ny,
        horiz,
        vert,
    })
}

/// Shared CSR assembly for the 5-point pattern. `diag_base` is added to
/// every diagonal entry and `scale` multiplies all face weights, so the
/// same walk produces both `L` (base 0, scale 1) and `M + tau L`
/// (base 1, scale tau).
fn assemble_five_point<T: Real>(faces: &FaceWeights<T>, diag_base: T, scale: T) -> SparseMatrix<T> {
    let (nx, ny) = (faces.nx, faces.ny);
    let n = nx * ny;
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx: Vec<u32> = Vec::with_capacity(5 * n);
    let mut values: Vec<T> = Vec::with_capacity(5 * n);
    row_ptr.push(0);
    for y in 0..ny {
        for x in 0..nx {
            let i = y * nx + x;
            let up = if y > 0 { Some(faces.vert(x, y - 1)) } else { None };
            let left = if x > 0 { Some(faces.horiz(x - 1, y)) } else { None };
            let right = if x + 1 < nx { Some(faces.horiz(x, y)) } else { None };
            let down = if y + 1 < ny { Some(faces.vert(x, y)) } else { None };
            // Fixed summation order keeps assembly deterministic.
            let mut diag = T::zero();
            for w in [up, left, right, down].into_iter().flatten() {
                diag += w;
            }
            if let Some(w) = up {
                col_idx.push((i - nx) as u32);
                values.push(-scale * w);
            }
            if let Some(w) = left {
                col_idx.push((i - 1) as u32);
                values.push(-scale * w);
            }
            col_idx.push(i as u32);
            values.push(diag_base + scale * diag);
            if let Some(w) = right {
                col_idx.push((i + 1) as u32);
                values.push(-scale * w);
            }
            if let Some(w) = down {
                col_idx.push((i + nx) as u32);
                values.push(-scale * w);
            }
            row_ptr.push(col_idx.len());
        }
    }
    SparseMatrix::from_parts(n, row_ptr, col_idx, values, true)
}

/// Stiffness matrix from precomputed face weights: `a_ij = -W_ij` for
/// neighbors, `a_ii = sum_j W_ij`; zero row sums.
pub fn stiffness_from_faces<T: Real>(faces: &FaceWeights<T>) -> SparseMatrix<T> {
    assemble_five_point(faces, T::zero(), T::one())
}

/// Implicit-step system `M + tau L` assembled in one pass.
pub fn implicit_system_from_faces<T: Real>(faces: &FaceWeights<T>, tau: T) -> SparseMatrix<T> {
    assemble_five_point(faces, T::one(), tau)
}

/// Full pipeline: gradient, coefficient, face weights, stiffness.
pub fn assemble_stiffness<T: Real>(
    channel: &[T],
    grid: &PixelGrid,
    lambda: T,
) -> Result<SparseMatrix<T>> {
    let grad = gradient_sq(channel, grid)?;
    let coeff = coefficient(&grad, lambda)?;
    let faces = face_weights(&coeff, grid)?;
    Ok(stiffness_from_faces(&faces))
}

/// Face weights straight from an image channel.
pub fn face_weights_of_channel<T: Real>(
    channel: &[T],
    grid: &PixelGrid,
    lambda: T,
) -> Result<FaceWeights<T>> {
    let grad = gradient_sq(channel, grid)?;
    let coeff = coefficient(&grad, lambda)?;
    face_weights(&coeff, grid)
}

/// Unit mass matrix (cell area 1).
pub fn mass_matrix<T: Real>(grid: &PixelGrid) -> DiagonalMatrix<T> {
    DiagonalMatrix::identity(grid.cell_count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gradient_constant_is_zero() {
        let grid = PixelGrid::new(4, 3).unwrap();
        let g = gradient_sq(&vec![0.7f64; 12], &grid).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_linear_ramp_interior() {
        let nx = 9;
        let ny = 5;
        let grid = PixelGrid::new(nx, ny).unwrap();
        let channel: Vec<f64> = (0..nx * ny)
            .map(|i| (i % nx) as f64 / (nx - 1) as f64)
            .collect();
        let g = gradient_sq(&channel, &grid).unwrap();
        let expected = 1.0 / ((nx - 1) * (nx - 1)) as f64;
        for y in 0..ny {
            for x in 1..nx - 1 {
                assert!((g[y * nx + x] - expected).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn gradient_center_spike() {
        // 3x3 with a unit spike at the center: the center cell sees zero
        // gradient, the edge-adjacent cells (1/2)^2 from one axis.
        let grid = PixelGrid::new(3, 3).unwrap();
        let mut channel = vec![0.0f64; 9];
        channel[4] = 1.0;
        let g = gradient_sq(&channel, &grid).unwrap();
        assert_eq!(g[4], 0.0);
        for idx in [1, 3, 5, 7] {
            assert!((g[idx] - 0.25).abs() <= 1e-15, "cell {idx}: {}", g[idx]);
        }
        for idx in [0, 2, 6, 8] {
            assert_eq!(g[idx], 0.0, "corner {idx}");
        }
    }

    #[test]
    fn gradient_dimension_mismatch() {
        let grid = PixelGrid::new(3, 3).unwrap();
        assert!(matches!(
            gradient_sq(&vec![0.0f64; 8], &grid),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn coefficient_closed_forms() {
        let c = coefficient(&[0.0f64, 0.09, 0.27], 0.3).unwrap();
        assert_eq!(c.values()[0], 1.0);
        assert!((c.values()[1] - 0.5).abs() <= 1e-15);
        assert!((c.values()[2] - 0.25).abs() <= 1e-15);
        assert!(matches!(
            coefficient(&[0.0f64], 0.0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            coefficient(&[0.0f64], -1.0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn transmissibility_closed_forms() {
        assert_eq!(transmissibility(1.0f64, 1.0).unwrap(), 1.0);
        assert!((transmissibility(1.0f64, 1.0 / 3.0).unwrap() - 0.5).abs() <= 1e-15);
        assert!((transmissibility(0.25f64, 0.75).unwrap() - 0.375).abs() <= 1e-15);
        assert!(transmissibility(0.0f64, 1.0).is_err());
        assert!(transmissibility(1.0f64, -0.5).is_err());
    }

    proptest! {
        #[test]
        fn transmissibility_symmetric_and_bounded(
            a in 1e-6f64..=1.0,
            b in 1e-6f64..=1.0,
        ) {
            let w_ab = transmissibility(a, b).unwrap();
            let w_ba = transmissibility(b, a).unwrap();
            prop_assert!((w_ab - w_ba).abs() <= 1e-15 * w_ab.abs().max(1.0));
            prop_assert!(w_ab > 0.0 && w_ab <= 1.0 + 1e-15);
            prop_assert!(w_ab <= a.max(b) + 1e-15);
            prop_assert!(w_ab >= a.min(b) - 1e-15);
        }
    }

    #[test]
    fn stiffness_1x2_constant() {
        let grid = PixelGrid::new(2, 1).unwrap();
        let l = assemble_stiffness(&[0.4f64, 0.4], &grid, 0.3).unwrap();
        assert_eq!(l.to_dense(), vec![1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn stiffness_constant_image_is_unit_laplacian() {
        let grid = PixelGrid::new(3, 3).unwrap();
        let l = assemble_stiffness(&vec![0.25f64; 9], &grid, 0.3).unwrap();
        // Center row: four -1 neighbors, diagonal 4.
        assert_eq!(l.get(4, 4), 4.0);
        for j in [1, 3, 5, 7] {
            assert_eq!(l.get(4, j), -1.0);
        }
        // Corner row: two neighbors.
        assert_eq!(l.get(0, 0), 2.0);
        assert_eq!(l.get(0, 1), -1.0);
        assert_eq!(l.get(0, 3), -1.0);
        assert_eq!(l.get(0, 4), 0.0);
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let grid = PixelGrid::new(7, 5).unwrap();
        let channel: Vec<f64> = (0..35).map(|i| ((i * 31) % 11) as f64 / 11.0).collect();
        let l = assemble_stiffness(&channel, &grid, 0.3).unwrap();
        let ones = vec![1.0; 35];
        for v in l.matvec(&ones) {
            assert!(v.abs() <= 1e-14);
        }
    }

    #[test]
    fn stiffness_is_symmetric() {
        let grid = PixelGrid::new(5, 4).unwrap();
        let channel: Vec<f64> = (0..20).map(|i| ((i * 17) % 7) as f64 / 7.0).collect();
        let l = assemble_stiffness(&channel, &grid, 0.3).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                assert_eq!(l.get(i, j), l.get(j, i), "({i},{j})");
            }
        }
    }

    #[test]
    fn implicit_system_shifts_diagonal() {
        let grid = PixelGrid::new(3, 2).unwrap();
        let channel: Vec<f64> = (0..6).map(|i| i as f64 / 5.0).collect();
        let faces = face_weights_of_channel(&channel, &grid, 0.3).unwrap();
        let l = stiffness_from_faces(&faces);
        let a = implicit_system_from_faces(&faces, 0.25);
        for i in 0..6 {
            for j in 0..6 {
                let expected = if i == j { 1.0 + 0.25 * l.get(i, j) } else { 0.25 * l.get(i, j) };
                assert!((a.get(i, j) - expected).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn mass_matrix_is_identity() {
        let grid = PixelGrid::new(4, 4).unwrap();
        let m = mass_matrix::<f64>(&grid);
        assert_eq!(m.n(), 16);
        assert!(m.diag().iter().all(|&v| v == 1.0));
        let trace: f64 = m.diag().iter().sum();
        assert_eq!(trace, 16.0);
    }

    #[test]
    fn single_row_grid_has_no_vertical_faces() {
        let grid = PixelGrid::new(4, 1).unwrap();
        let channel = vec![0.1f64, 0.9, 0.1, 0.9];
        let l = assemble_stiffness(&channel, &grid, 0.3).unwrap();
        for v in l.matvec(&vec![1.0; 4]) {
            assert!(v.abs() <= 1e-14);
        }
        assert_eq!(l.get(0, 2), 0.0);
    }
}
