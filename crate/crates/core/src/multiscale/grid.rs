//! Coarse grid geometry: agglomerated pixel cells, node-centered local
//! domains, and the bilinear partition of unity.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn cell_count(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Position of a global pixel in the rect's row-major enumeration.
    #[inline]
    pub fn local_index(&self, x: usize, y: usize) -> usize {
        debug_assert!(self.contains(x, y));
        (y - self.y0) * self.width() + (x - self.x0)
    }
}

/// Agglomeration of the pixel grid into square coarse cells with
/// node-centered local domains.
///
/// Coarse cells are indexed `(cx, cy)` with `cx in 0..ncx`; coarse nodes
/// (cell vertices) are indexed `(gx, gy)` with `gx in 0..=ncx`, flattened
/// row-major. The local domain of a node is the union of the coarse cells
/// touching it: four for interior nodes, two on edges, one in corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoarseGrid {
    nx: usize,
    ny: usize,
    cell_px: usize,
    ncx: usize,
    ncy: usize,
}

impl CoarseGrid {
    pub fn build(nx: usize, ny: usize, cell_px: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || cell_px == 0 {
            return Err(Error::InvalidParameter(format!(
                "coarse grid needs positive sizes, got image {nx}x{ny}, cell {cell_px}"
            )));
        }
        if nx % cell_px != 0 || ny % cell_px != 0 {
            return Err(Error::InvalidParameter(format!(
                "coarse cell size {cell_px} must divide image dimensions {nx}x{ny}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            cell_px,
            ncx: nx / cell_px,
            ncy: ny / cell_px,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn cell_px(&self) -> usize {
        self.cell_px
    }

    pub fn ncx(&self) -> usize {
        self.ncx
    }

    pub fn ncy(&self) -> usize {
        self.ncy
    }

    pub fn cell_count(&self) -> usize {
        self.ncx * self.ncy
    }

    pub fn node_count(&self) -> usize {
        (self.ncx + 1) * (self.ncy + 1)
    }

    /// Coarse system size for `m` basis functions per node.
    pub fn coarse_dof(&self, m: usize) -> usize {
        m * self.node_count()
    }

    pub fn node_grid(&self, node: usize) -> (usize, usize) {
        debug_assert!(node < self.node_count());
        (node % (self.ncx + 1), node / (self.ncx + 1))
    }

    pub fn node_index(&self, gx: usize, gy: usize) -> usize {
        debug_assert!(gx <= self.ncx && gy <= self.ncy);
        gy * (self.ncx + 1) + gx
    }

    pub fn cell_rect(&self, cx: usize, cy: usize) -> PixelRect {
        debug_assert!(cx < self.ncx && cy < self.ncy);
        PixelRect {
            x0: cx * self.cell_px,
            y0: cy * self.cell_px,
            x1: (cx + 1) * self.cell_px,
            y1: (cy + 1) * self.cell_px,
        }
    }

    /// Local domain of a node: the pixel rect spanned by its adjacent
    /// coarse cells.
    pub fn omega(&self, node: usize) -> PixelRect {
        let (gx, gy) = self.node_grid(node);
        PixelRect {
            x0: gx.saturating_sub(1) * self.cell_px,
            y0: gy.saturating_sub(1) * self.cell_px,
            x1: (gx + 1).min(self.ncx) * self.cell_px,
            y1: (gy + 1).min(self.ncy) * self.cell_px,
        }
    }

    /// Number of coarse cells in a node's local domain (1, 2 or 4).
    pub fn omega_cells(&self, node: usize) -> usize {
        let r = self.omega(node);
        (r.width() / self.cell_px) * (r.height() / self.cell_px)
    }
}

/// Per-node bilinear hat weights over the node's local domain; at every
/// pixel the weights of the covering nodes sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionOfUnity<T> {
    weights: Vec<Vec<T>>,
}

impl<T> PartitionOfUnity<T> {
    /// Weights over `omega(node)` in row-major rect order.
    pub fn node_weights(&self, node: usize) -> &[T] {
        &self.weights[node]
    }

    pub fn node_count(&self) -> usize {
        self.weights.len()
    }
}

pub fn partition_of_unity<T: Real>(cg: &CoarseGrid) -> PartitionOfUnity<T> {
    let cell = cg.cell_px as f64;
    let mut weights = Vec::with_capacity(cg.node_count());
    for node in 0..cg.node_count() {
        let (gx, gy) = cg.node_grid(node);
        let cx = (gx * cg.cell_px) as f64;
        let cy = (gy * cg.cell_px) as f64;
        let rect = cg.omega(node);
        let mut w = Vec::with_capacity(rect.cell_count());
        for y in rect.y0..rect.y1 {
            let ty = ((y as f64 + 0.5) - cy) / cell;
            let hy = 1.0 - ty.abs();
            for x in rect.x0..rect.x1 {
                let tx = ((x as f64 + 0.5) - cx) / cell;
                let hx = 1.0 - tx.abs();
                w.push(T::from_f64_c(hx * hy));
            }
        }
        weights.push(w);
    }
    PartitionOfUnity { weights }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_layouts() {
        let cg = CoarseGrid::build(512, 512, 64).unwrap();
        assert_eq!((cg.ncx(), cg.ncy()), (8, 8));
        assert_eq!(cg.node_count(), 81);
        let interior = cg.node_index(3, 4);
        let r = cg.omega(interior);
        assert_eq!((r.width(), r.height()), (128, 128));
        assert_eq!(cg.omega_cells(interior), 4);

        let cg = CoarseGrid::build(512, 512, 32).unwrap();
        assert_eq!((cg.ncx(), cg.ncy()), (16, 16));
        assert_eq!(cg.node_count(), 289);
        assert_eq!(cg.coarse_dof(16), 4624);
    }

    #[test]
    fn omega_cell_counts_by_position() {
        let cg = CoarseGrid::build(128, 96, 32).unwrap();
        assert_eq!(cg.omega_cells(cg.node_index(0, 0)), 1);
        assert_eq!(cg.omega_cells(cg.node_index(4, 3)), 1);
        assert_eq!(cg.omega_cells(cg.node_index(2, 0)), 2);
        assert_eq!(cg.omega_cells(cg.node_index(0, 1)), 2);
        assert_eq!(cg.omega_cells(cg.node_index(1, 1)), 4);
    }

    #[test]
    fn rejects_non_divisible_dimensions() {
        assert!(matches!(
            CoarseGrid::build(500, 512, 32),
            Err(Error::InvalidParameter(_))
        ));
        assert!(CoarseGrid::build(512, 500, 32).is_err());
        assert!(CoarseGrid::build(0, 512, 32).is_err());
        assert!(CoarseGrid::build(512, 512, 0).is_err());
    }

    #[test]
    fn omega_rects_clamp_at_boundary() {
        let cg = CoarseGrid::build(96, 96, 32).unwrap();
        let corner = cg.omega(cg.node_index(0, 0));
        assert_eq!(corner, PixelRect { x0: 0, y0: 0, x1: 32, y1: 32 });
        let edge = cg.omega(cg.node_index(1, 0));
        assert_eq!(edge, PixelRect { x0: 0, y0: 0, x1: 64, y1: 32 });
        let far = cg.omega(cg.node_index(3, 3));
        assert_eq!(far, PixelRect { x0: 64, y0: 64, x1: 96, y1: 96 });
    }

    fn pou_sum_check(nx: usize, ny: usize, cell: usize) {
        let cg = CoarseGrid::build(nx, ny, cell).unwrap();
        let pou = partition_of_unity::<f64>(&cg);
        let mut sums = vec![0.0f64; nx * ny];
        for node in 0..cg.node_count() {
            let rect = cg.omega(node);
            let w = pou.node_weights(node);
            let mut k = 0;
            for y in rect.y0..rect.y1 {
                for x in rect.x0..rect.x1 {
                    assert!(w[k] > 0.0 && w[k] <= 1.0);
                    sums[y * nx + x] += w[k];
                    k += 1;
                }
            }
        }
        for (i, s) in sums.iter().enumerate() {
            assert!((s - 1.0).abs() <= 1e-14, "pixel {i}: sum {s}");
        }
    }

    #[test]
    fn partition_sums_to_one() {
        pou_sum_check(512, 512, 64);
        pou_sum_check(512, 512, 32);
        pou_sum_check(512, 768, 32);
    }

    #[test]
    fn nearest_node_dominates() {
        let cg = CoarseGrid::build(64, 64, 16).unwrap();
        let pou = partition_of_unity::<f64>(&cg);
        // Pixel just next to node (2,2) at pixel position (32,32).
        let (px, py) = (32usize, 32usize);
        let near = cg.node_index(2, 2);
        let near_w = pou.node_weights(near)[cg.omega(near).local_index(px, py)];
        for node in 0..cg.node_count() {
            let rect = cg.omega(node);
            if node != near && rect.contains(px, py) {
                let w = pou.node_weights(node)[rect.local_index(px, py)];
                assert!(near_w >= w);
            }
        }
    }

    #[test]
    fn hat_decays_linearly_across_a_cell() {
        let cg = CoarseGrid::build(64, 64, 16).unwrap();
        let node = cg.node_index(2, 2);
        let rect = cg.omega(node);
        let pou = partition_of_unity::<f64>(&cg);
        let w = pou.node_weights(node);
        // March along y = 32 from the node toward the next one.
        let mut prev = f64::INFINITY;
        for x in 32..48 {
            let v = w[rect.local_index(x, 32)];
            assert!(v < prev);
            prev = v;
        }
        // Linearity: second difference vanishes.
        let a = w[rect.local_index(33, 32)];
        let b = w[rect.local_index(34, 32)];
        let c = w[rect.local_index(35, 32)];
        assert!((a - 2.0 * b + c).abs() <= 1e-14);
    }

    #[test]
    fn weights_vanish_outside_omega_by_construction() {
        let cg = CoarseGrid::build(96, 96, 32).unwrap();
        let pou = partition_of_unity::<f64>(&cg);
        for node in 0..cg.node_count() {
            assert_eq!(pou.node_weights(node).len(), cg.omega(node).cell_count());
        }
    }
}
