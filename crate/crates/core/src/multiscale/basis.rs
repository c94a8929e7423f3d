//! Offline stage: per-node local denoising, spectral problems on local
//! domains, and assembly of the global projection rows.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fine::{denoise_fine, SolverOptions, TimeScheme};
use crate::fvm::{self, PixelGrid};
use crate::multiscale::grid::{CoarseGrid, PartitionOfUnity, PixelRect};
use crate::scalar::Real;
use crate::sparse::{
    smallest_eigenpairs_with, DiagonalMatrix, EigenOptions, EigenPairs, SparseRows,
};

/// Offline-stage parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisConfig<T> {
    pub lambda: T,
    pub local_t_max: T,
    pub local_steps: usize,
    pub eigen_tol: T,
    pub eigen: EigenOptions,
    pub solver: SolverOptions<T>,
}

impl<T: Real> Default for BasisConfig<T> {
    fn default() -> Self {
        Self {
            lambda: T::from_f64_c(0.3),
            local_t_max: T::from_f64_c(5.0),
            local_steps: 30,
            eigen_tol: T::from_f64_c(1e-6),
            eigen: EigenOptions::default(),
            solver: SolverOptions::default(),
        }
    }
}

/// Restricts a channel to a pixel rect (row-major within the rect).
pub fn restrict_channel<T: Real>(
    channel: &[T],
    grid: &PixelGrid,
    rect: &PixelRect,
) -> Result<Vec<T>> {
    if channel.len() != grid.cell_count() {
        return Err(Error::DimensionMismatch(format!(
            "channel has {} values but grid is {}x{}",
            channel.len(),
            grid.nx(),
            grid.ny()
        )));
    }
    if rect.x1 > grid.nx() || rect.y1 > grid.ny() || rect.cell_count() == 0 {
        return Err(Error::InvalidParameter(format!(
            "rect [{},{})x[{},{}) outside {}x{} grid",
            rect.x0,
            rect.x1,
            rect.y0,
            rect.y1,
            grid.nx(),
            grid.ny()
        )));
    }
    let mut out = Vec::with_capacity(rect.cell_count());
    for y in rect.y0..rect.y1 {
        let base = y * grid.nx() + rect.x0;
        out.extend_from_slice(&channel[base..base + rect.width()]);
    }
    Ok(out)
}

/// Denoises the restriction of a channel to a local domain; the local
/// problem sees no faces beyond the domain boundary, giving zero-flux
/// conditions there.
pub fn local_denoise<T: Real>(
    channel: &[T],
    grid: &PixelGrid,
    rect: &PixelRect,
    lambda: T,
    t_max: T,
    steps: usize,
    opts: &SolverOptions<T>,
) -> Result<Vec<T>> {
    let local = restrict_channel(channel, grid, rect)?;
    let local_grid = PixelGrid::new(rect.width(), rect.height())?;
    let scheme = TimeScheme::new(t_max, steps)?;
    denoise_fine(&local, &local_grid, &scheme, lambda, opts, |_, _| {})
}

/// Spectral problem on a local domain: stiffness from the (denoised)
/// local image, weights from its own diagonal, smallest `m` pairs.
pub fn local_spectral_basis<T: Real>(
    i_tilde: &[T],
    local_grid: &PixelGrid,
    m: usize,
    lambda: T,
    eigen_tol: T,
    eigen: &EigenOptions,
) -> Result<EigenPairs<T>> {
    let s = fvm::assemble_stiffness(i_tilde, local_grid, lambda)?;
    let d = s.diagonal();
    if d.iter().any(|&v| v == T::zero()) {
        return Err(Error::InvalidParameter(
            "local stiffness has a zero diagonal entry (isolated cell); domain too small".into(),
        ));
    }
    smallest_eigenpairs_with(&s, &DiagonalMatrix::new(d), m, eigen_tol, eigen)
}

/// Runs the offline stage for every node: local denoise plus spectral
/// problem over each node's domain.
///
/// Nodes whose domains clamp to the same pixel rect share one computation,
/// and each rect's result depends only on that rect, so the output is
/// identical regardless of how the work is scheduled.
pub fn build_node_eigenpairs<T: Real>(
    channel: &[T],
    grid: &PixelGrid,
    cg: &CoarseGrid,
    m: usize,
    cfg: &BasisConfig<T>,
) -> Result<Vec<EigenPairs<T>>> {
    if grid.nx() != cg.nx() || grid.ny() != cg.ny() {
        return Err(Error::DimensionMismatch(format!(
            "grid {}x{} does not match coarse layout {}x{}",
            grid.nx(),
            grid.ny(),
            cg.nx(),
            cg.ny()
        )));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("basis count m must be >= 1".into()));
    }
    let mut rect_of_node = Vec::with_capacity(cg.node_count());
    let mut unique: BTreeMap<PixelRect, usize> = BTreeMap::new();
    for node in 0..cg.node_count() {
        let rect = cg.omega(node);
        if m > rect.cell_count() {
            return Err(Error::InvalidParameter(format!(
                "m = {m} exceeds the {} cells of node {node}'s local domain",
                rect.cell_count()
            )));
        }
        let next = unique.len();
        let slot = *unique.entry(rect).or_insert(next);
        rect_of_node.push(slot);
    }
    let mut rects: Vec<PixelRect> = vec![PixelRect { x0: 0, y0: 0, x1: 0, y1: 0 }; unique.len()];
    for (rect, slot) in &unique {
        rects[*slot] = *rect;
    }

    let solved: Vec<EigenPairs<T>> = rects
        .par_iter()
        .map(|rect| {
            let tilde = local_denoise(
                channel,
                grid,
                rect,
                cfg.lambda,
                cfg.local_t_max,
                cfg.local_steps,
                &cfg.solver,
            )?;
            let local_grid = PixelGrid::new(rect.width(), rect.height())?;
            local_spectral_basis(&tilde, &local_grid, m, cfg.lambda, cfg.eigen_tol, &cfg.eigen)
        })
        .collect::<Result<_>>()?;

    Ok(rect_of_node
        .into_iter()
        .map(|slot| solved[slot].clone())
        .collect())
}

/// Global projection: per node, `m` rows of hat-weighted local
/// eigenvectors over the node's domain, stored node-major with ascending
/// eigenvalue index.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiscaleBasis<T> {
    cg: CoarseGrid,
    node_m: usize,
    // Per node: m rows of omega-sized values, row-contiguous.
    node_values: Vec<Vec<T>>,
}

impl<T: Real> MultiscaleBasis<T> {
    pub(crate) fn from_parts(
        cg: CoarseGrid,
        node_m: usize,
        node_values: Vec<Vec<T>>,
    ) -> Result<Self> {
        if node_values.len() != cg.node_count() || node_m == 0 {
            return Err(Error::InvalidParameter(format!(
                "basis shape mismatch: {} nodes of data for {} nodes, m = {node_m}",
                node_values.len(),
                cg.node_count()
            )));
        }
        for (node, vals) in node_values.iter().enumerate() {
            let sz = cg.omega(node).cell_count();
            if vals.len() != node_m * sz {
                return Err(Error::InvalidParameter(format!(
                    "node {node} carries {} values, expected {}",
                    vals.len(),
                    node_m * sz
                )));
            }
        }
        Ok(Self {
            cg,
            node_m,
            node_values,
        })
    }

    pub fn coarse_grid(&self) -> &CoarseGrid {
        &self.cg
    }

    pub fn node_m(&self) -> usize {
        self.node_m
    }

    /// Total number of coarse unknowns.
    pub fn dof(&self) -> usize {
        self.cg.coarse_dof(self.node_m)
    }

    /// Fine-grid dimension (pixel count).
    pub fn n_h(&self) -> usize {
        self.cg.nx() * self.cg.ny()
    }

    /// All rows of one node, row-contiguous over its domain.
    pub fn node_values(&self, node: usize) -> &[T] {
        &self.node_values[node]
    }

    /// One projection row over `omega(node)` in rect row-major order.
    pub fn row(&self, node: usize, l: usize) -> &[T] {
        debug_assert!(l < self.node_m);
        let sz = self.cg.omega(node).cell_count();
        &self.node_values[node][l * sz..(l + 1) * sz]
    }

    /// Coarse coordinates of a fine vector: `out[node*m + l] = row . fine`.
    pub fn apply(&self, fine: &[T]) -> Vec<T> {
        debug_assert_eq!(fine.len(), self.n_h());
        let nx = self.cg.nx();
        let m = self.node_m;
        let mut out = vec![T::zero(); self.dof()];
        for node in 0..self.cg.node_count() {
            let rect = self.cg.omega(node);
            let w = rect.width();
            let sz = rect.cell_count();
            let rows = &self.node_values[node];
            let acc = &mut out[node * m..(node + 1) * m];
            let mut k = 0;
            // Pixel rows on the outside so one image segment serves every
            // basis function of the node.
            for y in rect.y0..rect.y1 {
                let src = &fine[y * nx + rect.x0..y * nx + rect.x0 + w];
                for (l, a) in acc.iter_mut().enumerate() {
                    let seg = &rows[l * sz + k..l * sz + k + w];
                    let mut t = T::zero();
                    for (rv, fv) in seg.iter().zip(src) {
                        t += *rv * *fv;
                    }
                    *a += t;
                }
                k += w;
            }
        }
        out
    }

    /// Fine-grid reconstruction of coarse coordinates.
    pub fn apply_transpose(&self, coarse: &[T]) -> Vec<T> {
        debug_assert_eq!(coarse.len(), self.dof());
        let nx = self.cg.nx();
        let m = self.node_m;
        let mut out = vec![T::zero(); self.n_h()];
        for node in 0..self.cg.node_count() {
            let rect = self.cg.omega(node);
            let w = rect.width();
            let sz = rect.cell_count();
            let rows = &self.node_values[node];
            let cs = &coarse[node * m..(node + 1) * m];
            let mut k = 0;
            // Same row-major blocking as `apply`, with the output segment
            // staying hot across the node's basis functions.
            for y in rect.y0..rect.y1 {
                let dst = &mut out[y * nx + rect.x0..y * nx + rect.x0 + w];
                for (l, &c) in cs.iter().enumerate() {
                    if c == T::zero() {
                        continue;
                    }
                    let seg = &rows[l * sz + k..l * sz + k + w];
                    for (dv, rv) in dst.iter_mut().zip(seg) {
                        *dv += *rv * c;
                    }
                }
                k += w;
            }
        }
        out
    }

    /// Materializes the rows as a general sparse row set (global pixel
    /// column indices).
    pub fn to_sparse_rows(&self) -> SparseRows<T> {
        let nx = self.cg.nx();
        let mut indices = Vec::with_capacity(self.dof());
        let mut values = Vec::with_capacity(self.dof());
        for node in 0..self.cg.node_count() {
            let rect = self.cg.omega(node);
            let mut cols = Vec::with_capacity(rect.cell_count());
            for y in rect.y0..rect.y1 {
                let base = y * nx + rect.x0;
                for i in 0..rect.width() {
                    cols.push((base + i) as u32);
                }
            }
            for l in 0..self.node_m {
                indices.push(cols.clone());
                values.push(self.row(node, l).to_vec());
            }
        }
        SparseRows::new(self.n_h(), indices, values).expect("basis rows are well-formed")
    }
}

/// Combines per-node eigenpairs with the partition of unity into the
/// global projection.
pub fn build_projection<T: Real>(
    cg: &CoarseGrid,
    pou: &PartitionOfUnity<T>,
    bases: &[EigenPairs<T>],
    m: usize,
) -> Result<MultiscaleBasis<T>> {
    if bases.len() != cg.node_count() || pou.node_count() != cg.node_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} eigenpair sets and {} weight sets for {} nodes",
            bases.len(),
            pou.node_count(),
            cg.node_count()
        )));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("basis count m must be >= 1".into()));
    }
    let mut node_values = Vec::with_capacity(cg.node_count());
    for node in 0..cg.node_count() {
        let rect = cg.omega(node);
        let sz = rect.cell_count();
        let pairs = &bases[node];
        if pairs.len() < m {
            return Err(Error::InvalidParameter(format!(
                "node {node} has {} eigenpairs, need {m}",
                pairs.len()
            )));
        }
        let chi = pou.node_weights(node);
        let mut vals = Vec::with_capacity(m * sz);
        for l in 0..m {
            let psi = &pairs.vectors[l];
            if psi.len() != sz {
                return Err(Error::DimensionMismatch(format!(
                    "node {node} eigenvector length {} vs domain size {sz}",
                    psi.len()
                )));
            }
            vals.extend(chi.iter().zip(psi).map(|(&c, &p)| c * p));
        }
        node_values.push(vals);
    }
    MultiscaleBasis::from_parts(*cg, m, node_values)
}
