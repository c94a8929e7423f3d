//! Online stage: implicit time stepping projected onto the multiscale
//! space, reconstructed back to the fine grid after every step.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::fine::{SolverOptions, TimeScheme};
use crate::fvm::{self, FaceWeights, PixelGrid};
use crate::multiscale::basis::MultiscaleBasis;
use crate::multiscale::grid::{CoarseGrid, PixelRect};
use crate::scalar::Real;
use crate::sparse::{cg_operator, cg_solve_jacobi, pcg_operator, BandCholesky, SparseMatrix};

/// How the coarse Galerkin system is applied inside CG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoarseMode {
    /// Assemble the coarse matrix when it is smaller than the fine system,
    /// otherwise keep it matrix-free.
    #[default]
    Auto,
    Explicit,
    Operator,
}

const COARSE_SOLVER: &str =
    "cg on the coarse Galerkin system (projection rows may be nearly dependent; \
     retry with fewer basis functions per node)";

fn coarse_err(e: Error) -> Error {
    match e {
        Error::NonConvergence {
            iterations,
            residual,
            ..
        } => Error::NonConvergence {
            solver: COARSE_SOLVER,
            iterations,
            residual,
        },
        other => other,
    }
}

/// Runs the implicit scheme in the multiscale space starting from the input
/// image, reconstructing after every step; with zero steps the image is only
/// projected onto the space. The observer receives each reconstructed
/// iterate. Only the returned image is clamped to [0, 1].
pub fn coarse_denoise<T, F>(
    i0: &[T],
    basis: &MultiscaleBasis<T>,
    scheme: &TimeScheme<T>,
    lambda: T,
    opts: &SolverOptions<T>,
    observer: F,
) -> Result<Vec<T>>
where
    T: Real,
    F: FnMut(usize, &[T]),
{
    coarse_denoise_with(i0, basis, scheme, lambda, opts, CoarseMode::Auto, observer)
}

/// [`coarse_denoise`] with an explicit solver-strategy choice.
pub fn coarse_denoise_with<T, F>(
    i0: &[T],
    basis: &MultiscaleBasis<T>,
    scheme: &TimeScheme<T>,
    lambda: T,
    opts: &SolverOptions<T>,
    mode: CoarseMode,
    observer: F,
) -> Result<Vec<T>>
where
    T: Real,
    F: FnMut(usize, &[T]),
{
    if i0.len() != basis.n_h() {
        return Err(Error::DimensionMismatch(format!(
            "image has {} pixels but the basis was built for {}",
            i0.len(),
            basis.n_h()
        )));
    }
    let explicit = match mode {
        CoarseMode::Auto => basis.dof() < basis.n_h(),
        CoarseMode::Explicit => true,
        CoarseMode::Operator => false,
    };
    if explicit {
        run_explicit(i0, basis, scheme, lambda, opts, observer)
    } else {
        run_operator(i0, basis, scheme, lambda, opts, observer)
    }
}

fn clamp01_vec<T: Real>(mut v: Vec<T>) -> Vec<T> {
    for x in &mut v {
        *x = x.max(T::zero()).min(T::one());
    }
    v
}

// ---------------------------------------------------------------------------
// Explicit path: the coarse matrices are assembled cell by cell. Every fine
// face lies either inside one coarse cell or on the interface between two
// adjacent cells, so the Galerkin stiffness splits into per-cell products
// over the four corner nodes plus per-interface products over the six nodes
// touching both cells. The mass part only sees per-cell overlaps.
// ---------------------------------------------------------------------------

/// Node-pair block layout of the coarse matrices and the CSR skeleton they
/// fill. Built once per basis; values are refilled every step.
struct Pattern {
    m: usize,
    n_nodes: usize,
    // Unordered node pairs (i <= j), sorted.
    pairs: Vec<(u32, u32)>,
    // Flattened per-node partner lists, sorted by partner id.
    partner_start: Vec<usize>,
    partner_pair: Vec<u32>,
    partner_transposed: Vec<bool>,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
}

impl Pattern {
    fn build(cg: &CoarseGrid, m: usize) -> Pattern {
        let n_nodes = cg.node_count();
        let mut pair_set: BTreeSet<(u32, u32)> = BTreeSet::new();
        let mut add_group = |nodes: &[usize]| {
            for (a, &i) in nodes.iter().enumerate() {
                for &j in &nodes[a..] {
                    pair_set.insert((i as u32, j as u32));
                }
            }
        };
        for cy in 0..cg.ncy() {
            for cx in 0..cg.ncx() {
                add_group(&cell_nodes(cg, cx, cy));
            }
        }
        for cy in 0..cg.ncy() {
            for cx in 0..cg.ncx() - 1 {
                add_group(&vertical_interface_nodes(cg, cx, cy));
            }
        }
        for cy in 0..cg.ncy() - 1 {
            for cx in 0..cg.ncx() {
                add_group(&horizontal_interface_nodes(cg, cx, cy));
            }
        }
        let pairs: Vec<(u32, u32)> = pair_set.into_iter().collect();

        let mut partners: Vec<Vec<(u32, u32, bool)>> = vec![Vec::new(); n_nodes];
        for (k, &(i, j)) in pairs.iter().enumerate() {
            partners[i as usize].push((j, k as u32, false));
            if i != j {
                partners[j as usize].push((i, k as u32, true));
            }
        }
        let mut partner_start = Vec::with_capacity(n_nodes + 1);
        let mut partner_pair = Vec::new();
        let mut partner_transposed = Vec::new();
        partner_start.push(0);
        let mut partner_node = Vec::new();
        for list in &mut partners {
            list.sort_unstable_by_key(|&(other, _, _)| other);
            for &(other, k, t) in list.iter() {
                partner_node.push(other);
                partner_pair.push(k);
                partner_transposed.push(t);
            }
            partner_start.push(partner_pair.len());
        }

        let n = n_nodes * m;
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for node in 0..n_nodes {
            let span = partner_start[node]..partner_start[node + 1];
            for _ in 0..m {
                for pi in span.clone() {
                    let other = partner_node[pi];
                    for lp in 0..m {
                        col_idx.push(other * m as u32 + lp as u32);
                    }
                }
                row_ptr.push(col_idx.len());
            }
        }

        Pattern {
            m,
            n_nodes,
            pairs,
            partner_start,
            partner_pair,
            partner_transposed,
            row_ptr,
            col_idx,
        }
    }

    fn pair_index(&self, i: usize, j: usize) -> usize {
        self.pairs
            .binary_search(&(i as u32, j as u32))
            .expect("node pair outside the assembly pattern")
    }

    fn zero_blocks<T: Real>(&self) -> Vec<Vec<T>> {
        vec![vec![T::zero(); self.m * self.m]; self.pairs.len()]
    }

    /// Copies the upper triangle of every diagonal block onto its lower
    /// triangle, so both CSR orientations read the same scalar and the
    /// assembled matrix is exactly symmetric.
    fn symmetrize_self_blocks<T: Real>(&self, blocks: &mut [Vec<T>]) {
        let m = self.m;
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            if i == j {
                let b = &mut blocks[k];
                for l in 0..m {
                    for lp in l + 1..m {
                        b[lp * m + l] = b[l * m + lp];
                    }
                }
            }
        }
    }

    fn fill_values<T: Real>(&self, blocks: &[Vec<T>], out: &mut Vec<T>) {
        let m = self.m;
        out.clear();
        out.reserve(self.col_idx.len());
        for node in 0..self.n_nodes {
            let span = self.partner_start[node]..self.partner_start[node + 1];
            for l in 0..m {
                for pi in span.clone() {
                    let block = &blocks[self.partner_pair[pi] as usize];
                    if self.partner_transposed[pi] {
                        for lp in 0..m {
                            out.push(block[lp * m + l]);
                        }
                    } else {
                        out.extend_from_slice(&block[l * m..l * m + m]);
                    }
                }
            }
        }
    }

    /// `y = A x` straight from the blocks, reading the same scalars
    /// `fill_values` would emit.
    fn block_matvec<T: Real>(&self, blocks: &[Vec<T>], x: &[T], y: &mut [T]) {
        let m = self.m;
        debug_assert_eq!(x.len(), self.n_nodes * m);
        debug_assert_eq!(y.len(), self.n_nodes * m);
        for node in 0..self.n_nodes {
            let yn = &mut y[node * m..(node + 1) * m];
            yn.fill(T::zero());
            for pi in self.partner_start[node]..self.partner_start[node + 1] {
                let k = self.partner_pair[pi] as usize;
                let b = &blocks[k];
                let (i, j) = self.pairs[k];
                let other = if self.partner_transposed[pi] { i } else { j } as usize;
                let xn = &x[other * m..(other + 1) * m];
                if self.partner_transposed[pi] {
                    // The stored block is `(other, node)`; apply its
                    // transpose row by row to keep the reads contiguous.
                    for (lp, &xv) in xn.iter().enumerate() {
                        let brow = &b[lp * m..(lp + 1) * m];
                        for (yv, bv) in yn.iter_mut().zip(brow) {
                            *yv += *bv * xv;
                        }
                    }
                } else {
                    for (l, yv) in yn.iter_mut().enumerate() {
                        let brow = &b[l * m..(l + 1) * m];
                        let mut acc = T::zero();
                        for (bv, xv) in brow.iter().zip(xn) {
                            acc += *bv * *xv;
                        }
                        *yv += acc;
                    }
                }
            }
        }
    }

    fn to_matrix<T: Real>(&self, values: Vec<T>) -> SparseMatrix<T> {
        SparseMatrix::from_parts(
            self.n_nodes * self.m,
            self.row_ptr.clone(),
            self.col_idx.clone(),
            values,
            true,
        )
    }
}

/// The four corner nodes of cell `(cx, cy)`, ascending node index.
fn cell_nodes(cg: &CoarseGrid, cx: usize, cy: usize) -> [usize; 4] {
    [
        cg.node_index(cx, cy),
        cg.node_index(cx + 1, cy),
        cg.node_index(cx, cy + 1),
        cg.node_index(cx + 1, cy + 1),
    ]
}

/// The six nodes touching the interface between cells `(cx, cy)` and
/// `(cx+1, cy)`, ascending node index.
fn vertical_interface_nodes(cg: &CoarseGrid, cx: usize, cy: usize) -> [usize; 6] {
    [
        cg.node_index(cx, cy),
        cg.node_index(cx + 1, cy),
        cg.node_index(cx + 2, cy),
        cg.node_index(cx, cy + 1),
        cg.node_index(cx + 1, cy + 1),
        cg.node_index(cx + 2, cy + 1),
    ]
}

/// The six nodes touching the interface between cells `(cx, cy)` and
/// `(cx, cy+1)`, ascending node index.
fn horizontal_interface_nodes(cg: &CoarseGrid, cx: usize, cy: usize) -> [usize; 6] {
    [
        cg.node_index(cx, cy),
        cg.node_index(cx + 1, cy),
        cg.node_index(cx, cy + 1),
        cg.node_index(cx + 1, cy + 1),
        cg.node_index(cx, cy + 2),
        cg.node_index(cx + 1, cy + 2),
    ]
}

/// Gathers the group nodes' rows restricted to one cell: `group.len() * m`
/// rows of `cell` pixels, row-major.
fn extract_cell_rows<T: Real>(
    basis: &MultiscaleBasis<T>,
    group: &[usize],
    cell: &PixelRect,
    out: &mut Vec<T>,
) {
    let cg = basis.coarse_grid();
    let m = basis.node_m();
    let cw = cell.width();
    out.clear();
    for &node in group {
        let rect = cg.omega(node);
        let rw = rect.width();
        let x_off = cell.x0 - rect.x0;
        for l in 0..m {
            let row = basis.row(node, l);
            for y in cell.y0..cell.y1 {
                let off = (y - rect.y0) * rw + x_off;
                out.extend_from_slice(&row[off..off + cw]);
            }
        }
    }
}


/// Adds `Y U^T` into the pair blocks of the group. The product is formed in
/// one multiply (a square shape runs much faster than thin panels) and only
/// blocks with `a <= b` in group order are kept; the group must be sorted by
/// node index so it maps onto stored pairs.
fn scatter_products<T: Real>(
    pattern: &Pattern,
    group: &[usize],
    y: &[T],
    u: &[T],
    k_dim: usize,
    c_buf: &mut Vec<T>,
    blocks: &mut [Vec<T>],
) {
    let m = pattern.m;
    let rows = group.len() * m;
    // Sized but not cleared: the product overwrites every entry.
    c_buf.resize(rows * rows, T::zero());
    T::gemm_nt(rows, rows, k_dim, y, u, c_buf);
    for b in 0..group.len() {
        for a in 0..=b {
            let block = &mut blocks[pattern.pair_index(group[a], group[b])];
            for l in 0..m {
                let base = (a * m + l) * rows + b * m;
                let src = &c_buf[base..base + m];
                let dst = &mut block[l * m..l * m + m];
                for (d, v) in dst.iter_mut().zip(src) {
                    *d += *v;
                }
            }
        }
    }
}

/// Assembly state reused by every step of one run: the extracted cell rows
/// depend only on the basis, and the block storage keeps its allocation.
/// The rows are a relayout of the whole basis, so this roughly doubles its
/// footprint for the duration of the run.
struct Assembler<T> {
    cells: Vec<Vec<T>>,
    blocks: Vec<Vec<T>>,
}

impl<T: Real> Assembler<T> {
    fn new(basis: &MultiscaleBasis<T>, pattern: &Pattern) -> Self {
        let cg = basis.coarse_grid();
        let mut cells = Vec::with_capacity(cg.ncx() * cg.ncy());
        for cy in 0..cg.ncy() {
            for cx in 0..cg.ncx() {
                let cell = cg.cell_rect(cx, cy);
                let group = cell_nodes(cg, cx, cy);
                let mut u = Vec::new();
                extract_cell_rows(basis, &group, &cell, &mut u);
                cells.push(u);
            }
        }
        Self {
            cells,
            blocks: pattern.zero_blocks(),
        }
    }
}

/// Blocks of `R R^T` (unit mass): per-cell row products only.
fn mass_blocks<T: Real>(basis: &MultiscaleBasis<T>, pattern: &Pattern) -> Vec<Vec<T>> {
    let cg = basis.coarse_grid();
    let mut blocks = pattern.zero_blocks::<T>();
    let mut u = Vec::new();
    let mut c_buf = Vec::new();
    for cy in 0..cg.ncy() {
        for cx in 0..cg.ncx() {
            let cell = cg.cell_rect(cx, cy);
            let group = cell_nodes(cg, cx, cy);
            extract_cell_rows(basis, &group, &cell, &mut u);
            scatter_products(
                pattern,
                &group,
                &u,
                &u,
                cell.cell_count(),
                &mut c_buf,
                &mut blocks,
            );
        }
    }
    pattern.symmetrize_self_blocks(&mut blocks);
    blocks
}

/// Applies the stiffness operator of the faces interior to one cell to each
/// row of `u`. Split into directional passes over contiguous slices.
#[allow(clippy::too_many_arguments)]
fn apply_cell_stencil<T: Real>(
    u: &[T],
    y: &mut Vec<T>,
    nrows: usize,
    w: usize,
    h: usize,
    lwh: &[T],
    lwv: &[T],
    ldiag: &[T],
) {
    let sz = w * h;
    // Sized but not cleared: the diagonal pass writes every entry.
    y.resize(nrows * sz, T::zero());
    for r in 0..nrows {
        let ur = &u[r * sz..(r + 1) * sz];
        let yr = &mut y[r * sz..(r + 1) * sz];
        for (yv, (uv, dv)) in yr.iter_mut().zip(ur.iter().zip(ldiag)) {
            *yv = *dv * *uv;
        }
        for yy in 0..h {
            let row = yy * w;
            let wrow = &lwh[yy * (w - 1)..(yy + 1) * (w - 1)];
            let yrow = &mut yr[row..row + w];
            for ((yv, wv), uv) in yrow[..w - 1].iter_mut().zip(wrow).zip(&ur[row + 1..row + w]) {
                *yv -= *wv * *uv;
            }
            for ((yv, wv), uv) in yrow[1..].iter_mut().zip(wrow).zip(&ur[row..row + w - 1]) {
                *yv -= *wv * *uv;
            }
        }
        for yy in 0..h.saturating_sub(1) {
            let row = yy * w;
            let wrow = &lwv[row..row + w];
            let (upper, lower) = yr.split_at_mut(row + w);
            let ya = &mut upper[row..];
            let yb = &mut lower[..w];
            for ((yv, wv), uv) in ya.iter_mut().zip(wrow).zip(&ur[row + w..row + 2 * w]) {
                *yv -= *wv * *uv;
            }
            for ((yv, wv), uv) in yb.iter_mut().zip(wrow).zip(&ur[row..row + w]) {
                *yv -= *wv * *uv;
            }
        }
    }
}

/// Adds the interface contribution `E diag(w) E^T` for one run of crossing
/// faces, where row `(node, l)` of `E` holds the jump of that basis row
/// across each face. The faces advance one pixel per step along one axis,
/// so each support sees the two sides as clipped pixel lines.
#[allow(clippy::too_many_arguments)]
fn interface_terms<T: Real>(
    basis: &MultiscaleBasis<T>,
    pattern: &Pattern,
    group: &[usize],
    pq: &[((usize, usize), (usize, usize))],
    w: &[T],
    e_buf: &mut Vec<T>,
    ew_buf: &mut Vec<T>,
    c_buf: &mut Vec<T>,
    blocks: &mut [Vec<T>],
) {
    let cg = basis.coarse_grid();
    let m = basis.node_m();
    let len = pq.len();
    let vary_y = len > 1 && pq[1].0 .1 != pq[0].0 .1;
    debug_assert!(pq.iter().enumerate().all(|(k, &((px, py), (qx, qy)))| {
        let ((px0, py0), (qx0, qy0)) = pq[0];
        if vary_y {
            (px, py, qx, qy) == (px0, py0 + k, qx0, qy0 + k)
        } else {
            (px, py, qx, qy) == (px0 + k, py0, qx0 + k, qy0)
        }
    }));
    e_buf.clear();
    e_buf.resize(group.len() * m * len, T::zero());
    ew_buf.clear();
    ew_buf.resize(group.len() * m * len, T::zero());
    for (g, &node) in group.iter().enumerate() {
        let rect = cg.omega(node);
        let (p0, p1, pi, ps) = side_span(&rect, pq[0].0, vary_y, len);
        let (q0, q1, qi, qs) = side_span(&rect, pq[0].1, vary_y, len);
        for l in 0..m {
            let row = basis.row(node, l);
            let at = (g * m + l) * len;
            let er = &mut e_buf[at..at + len];
            let mut idx = pi;
            for ek in &mut er[p0..p1] {
                *ek = row[idx];
                idx += ps;
            }
            let mut idx = qi;
            for ek in &mut er[q0..q1] {
                *ek -= row[idx];
                idx += qs;
            }
            let ewr = &mut ew_buf[at..at + len];
            for ((dw, d), wk) in ewr.iter_mut().zip(&e_buf[at..at + len]).zip(w) {
                *dw = *d * *wk;
            }
        }
    }
    scatter_products(pattern, group, ew_buf, e_buf, len, c_buf, blocks);
}

/// Clips one side of a face run to a support rectangle: the faces `k0..k1`
/// land inside it and their values sit at `start, start + step, ..` of the
/// local rows. Sides that miss the rectangle come back empty.
fn side_span(
    rect: &PixelRect,
    first: (usize, usize),
    vary_y: bool,
    len: usize,
) -> (usize, usize, usize, usize) {
    let (x, y) = first;
    if vary_y {
        if x < rect.x0 || x >= rect.x1 {
            return (0, 0, 0, 0);
        }
        let lo = y.max(rect.y0);
        let hi = (y + len).min(rect.y1);
        if lo >= hi {
            return (0, 0, 0, 0);
        }
        (lo - y, hi - y, rect.local_index(x, lo), rect.width())
    } else {
        if y < rect.y0 || y >= rect.y1 {
            return (0, 0, 0, 0);
        }
        let lo = x.max(rect.x0);
        let hi = (x + len).min(rect.x1);
        if lo >= hi {
            return (0, 0, 0, 0);
        }
        (lo - x, hi - x, rect.local_index(lo, y), 1)
    }
}

/// Blocks of `R (M + tau L) R^T` for the faces of one reconstructed
/// iterate, assembled in a single pass into `asm.blocks`: cell stencils
/// carry a unit diagonal plus the tau-scaled interior faces, interface
/// products get tau-scaled weights.
fn system_blocks<T: Real>(
    basis: &MultiscaleBasis<T>,
    pattern: &Pattern,
    asm: &mut Assembler<T>,
    faces: &FaceWeights<T>,
    tau: T,
) {
    let cg = basis.coarse_grid();
    let m = basis.node_m();
    let cpx = cg.cell_px();
    for b in &mut asm.blocks {
        b.fill(T::zero());
    }
    let mut y = Vec::new();
    let mut c_buf = Vec::new();
    let mut lwh = Vec::new();
    let mut lwv = Vec::new();
    let mut ldiag = Vec::new();

    for cy in 0..cg.ncy() {
        for cx in 0..cg.ncx() {
            let cell = cg.cell_rect(cx, cy);
            let (w, h) = (cell.width(), cell.height());
            lwh.clear();
            for yy in 0..h {
                for xx in 0..w - 1 {
                    lwh.push(tau * faces.horiz(cell.x0 + xx, cell.y0 + yy));
                }
            }
            lwv.clear();
            for yy in 0..h.saturating_sub(1) {
                for xx in 0..w {
                    lwv.push(tau * faces.vert(cell.x0 + xx, cell.y0 + yy));
                }
            }
            ldiag.clear();
            ldiag.resize(w * h, T::one());
            for yy in 0..h {
                for xx in 0..w - 1 {
                    let wgt = lwh[yy * (w - 1) + xx];
                    ldiag[yy * w + xx] += wgt;
                    ldiag[yy * w + xx + 1] += wgt;
                }
            }
            for yy in 0..h.saturating_sub(1) {
                for xx in 0..w {
                    let wgt = lwv[yy * w + xx];
                    ldiag[yy * w + xx] += wgt;
                    ldiag[(yy + 1) * w + xx] += wgt;
                }
            }

            let group = cell_nodes(cg, cx, cy);
            let u = &asm.cells[cy * cg.ncx() + cx];
            apply_cell_stencil(u, &mut y, 4 * m, w, h, &lwh, &lwv, &ldiag);
            scatter_products(pattern, &group, &y, u, w * h, &mut c_buf, &mut asm.blocks);
        }
    }

    let mut e_buf = Vec::new();
    let mut ew_buf = Vec::new();
    let mut pq = Vec::with_capacity(cpx);
    let mut wf: Vec<T> = Vec::with_capacity(cpx);
    for cy in 0..cg.ncy() {
        for cx in 0..cg.ncx() - 1 {
            let xe = (cx + 1) * cpx - 1;
            let y0 = cy * cpx;
            pq.clear();
            wf.clear();
            for k in 0..cpx {
                pq.push(((xe, y0 + k), (xe + 1, y0 + k)));
                wf.push(tau * faces.horiz(xe, y0 + k));
            }
            let group = vertical_interface_nodes(cg, cx, cy);
            interface_terms(
                basis, pattern, &group, &pq, &wf, &mut e_buf, &mut ew_buf, &mut c_buf,
                &mut asm.blocks,
            );
        }
    }
    for cy in 0..cg.ncy() - 1 {
        for cx in 0..cg.ncx() {
            let ye = (cy + 1) * cpx - 1;
            let x0 = cx * cpx;
            pq.clear();
            wf.clear();
            for k in 0..cpx {
                pq.push(((x0 + k, ye), (x0 + k, ye + 1)));
                wf.push(tau * faces.vert(x0 + k, ye));
            }
            let group = horizontal_interface_nodes(cg, cx, cy);
            interface_terms(
                basis, pattern, &group, &pq, &wf, &mut e_buf, &mut ew_buf, &mut c_buf,
                &mut asm.blocks,
            );
        }
    }

    pattern.symmetrize_self_blocks(&mut asm.blocks);
}

fn run_explicit<T, F>(
    i0: &[T],
    basis: &MultiscaleBasis<T>,
    scheme: &TimeScheme<T>,
    lambda: T,
    opts: &SolverOptions<T>,
    mut observer: F,
) -> Result<Vec<T>>
where
    T: Real,
    F: FnMut(usize, &[T]),
{
    let cg = basis.coarse_grid();
    let grid = PixelGrid::new(cg.nx(), cg.ny())?;
    let dof = basis.dof();
    let pattern = Pattern::build(cg, basis.node_m());
    let max_iter = opts.max_iter_for(dof);

    if scheme.n_steps() == 0 {
        let gm_blocks = mass_blocks(basis, &pattern);
        let mut gm_values = Vec::new();
        pattern.fill_values(&gm_blocks, &mut gm_values);
        let gm = pattern.to_matrix(gm_values);
        let rhs = basis.apply(i0);
        let i_h = match BandCholesky::factor(&gm) {
            Some(f) => f.solve(&rhs),
            None => cg_solve_jacobi(&gm, &rhs, opts.cg_tol, max_iter).map_err(coarse_err)?,
        };
        return Ok(clamp01_vec(basis.apply_transpose(&i_h)));
    }

    // An explicit projection before the first step would change nothing:
    // with unit mass the first right-hand side is the same vector either
    // way, and it would cost an extra solve against the ill-conditioned
    // Gram matrix.
    //
    // The first step's system is factored once; later steps keep it as a
    // preconditioner, since the system drifts only as fast as the diffused
    // image does.
    let tau = scheme.tau();
    let two = T::one() + T::one();
    let mut recon = i0.to_vec();
    let mut i_h: Vec<T> = Vec::new();
    let mut prev: Vec<T> = Vec::new();
    let mut guess: Vec<T> = Vec::new();
    let mut factor: Option<BandCholesky<T>> = None;
    // CSR form is only kept when the factorization fails and the Jacobi
    // fallback needs the matrix itself.
    let mut a_h: Option<SparseMatrix<T>> = None;
    let mut asm = Assembler::new(basis, &pattern);
    for n in 1..=scheme.n_steps() {
        let t0 = std::time::Instant::now();
        let faces = fvm::face_weights_of_channel(&recon, &grid, lambda)?;
        system_blocks(basis, &pattern, &mut asm, &faces, tau);
        let t_sys = t0.elapsed();
        let rhs = basis.apply(&recon);
        let t_fill = t0.elapsed();
        if n == 1 {
            let mut vals = Vec::new();
            pattern.fill_values(&asm.blocks, &mut vals);
            let a1 = pattern.to_matrix(vals);
            factor = BandCholesky::factor(&a1);
            if factor.is_none() {
                a_h = Some(a1);
            }
        } else if let Some(a) = a_h.as_mut() {
            pattern.fill_values(&asm.blocks, a.values_mut());
        }
        let t_factor = t0.elapsed();
        eprintln!(
            "[probe] step {n}: sys {t_sys:?} rhs {:?} factor+fill {:?}",
            t_fill - t_sys,
            t_factor - t_fill
        );
        // Later steps start from the linear extrapolation of the last two
        // solutions, which tracks the slow drift of the iterates.
        let x0: Option<&[T]> = if n == 1 {
            None
        } else if prev.is_empty() {
            Some(&i_h)
        } else {
            guess.clear();
            guess.extend(i_h.iter().zip(&prev).map(|(&a, &b)| two * a - b));
            Some(&guess)
        };
        let t_before_solve = t0.elapsed();
        let sol = match &factor {
            Some(f) => pcg_operator(
                |x, y| pattern.block_matvec(&asm.blocks, x, y),
                dof,
                &rhs,
                x0,
                opts.cg_tol,
                max_iter,
                |r, z| f.solve_into(r, z),
            )
            .map_err(coarse_err)?,
            None => {
                let a = a_h.as_ref().expect("fallback matrix present");
                cg_solve_jacobi(a, &rhs, opts.cg_tol, max_iter).map_err(coarse_err)?
            }
        };
        prev = std::mem::replace(&mut i_h, sol);
        eprintln!(
            "[probe] step {n}: solve {:?} total {:?}",
            t0.elapsed() - t_before_solve,
            t0.elapsed()
        );
        recon = basis.apply_transpose(&i_h);
        observer(n, &recon);
    }
    Ok(clamp01_vec(recon))
}

// ---------------------------------------------------------------------------
// Operator path: `R (M + tau L) R^T` is applied factor by factor; used when
// the coarse space is at least as large as the fine one, where assembling
// the product would cost more than it saves.
// ---------------------------------------------------------------------------

/// Diagonal of `R A R^T` for Jacobi preconditioning, via the within-domain
/// part of `A`'s stencil (rows of `R` vanish outside their domain).
fn coarse_operator_diag<T: Real>(
    basis: &MultiscaleBasis<T>,
    a: &SparseMatrix<T>,
    faces: &FaceWeights<T>,
    tau: T,
) -> Vec<T> {
    let cg = basis.coarse_grid();
    let nx = cg.nx();
    let app = a.diagonal();
    let two_tau = tau + tau;
    let mut out = Vec::with_capacity(basis.dof());
    for node in 0..cg.node_count() {
        let rect = cg.omega(node);
        let w = rect.width();
        for l in 0..basis.node_m() {
            let row = basis.row(node, l);
            let mut acc = T::zero();
            let mut k = 0;
            for y in rect.y0..rect.y1 {
                let base = y * nx + rect.x0;
                for i in 0..w {
                    let v = row[k + i];
                    acc += app[base + i] * v * v;
                }
                k += w;
            }
            let mut cross = T::zero();
            for y in rect.y0..rect.y1 {
                let krow = (y - rect.y0) * w;
                for x in rect.x0..rect.x1 - 1 {
                    let kloc = krow + (x - rect.x0);
                    cross += faces.horiz(x, y) * row[kloc] * row[kloc + 1];
                }
            }
            for y in rect.y0..rect.y1 - 1 {
                let krow = (y - rect.y0) * w;
                for x in rect.x0..rect.x1 {
                    let kloc = krow + (x - rect.x0);
                    cross += faces.vert(x, y) * row[kloc] * row[kloc + w];
                }
            }
            out.push(acc - two_tau * cross);
        }
    }
    out
}

fn run_operator<T, F>(
    i0: &[T],
    basis: &MultiscaleBasis<T>,
    scheme: &TimeScheme<T>,
    lambda: T,
    opts: &SolverOptions<T>,
    mut observer: F,
) -> Result<Vec<T>>
where
    T: Real,
    F: FnMut(usize, &[T]),
{
    let cg = basis.coarse_grid();
    let grid = PixelGrid::new(cg.nx(), cg.ny())?;
    let dof = basis.dof();
    let max_iter = opts.max_iter_for(dof);

    if scheme.n_steps() == 0 {
        let mut gm_diag = Vec::with_capacity(dof);
        for node in 0..cg.node_count() {
            for l in 0..basis.node_m() {
                let mut acc = T::zero();
                for &v in basis.row(node, l) {
                    acc += v * v;
                }
                gm_diag.push(acc);
            }
        }
        let apply_gm = |x: &[T], y: &mut [T]| {
            let f = basis.apply_transpose(x);
            y.copy_from_slice(&basis.apply(&f));
        };
        let rhs = basis.apply(i0);
        let i_h = cg_operator(apply_gm, dof, &rhs, opts.cg_tol, max_iter, Some(&gm_diag))
            .map_err(coarse_err)?;
        return Ok(clamp01_vec(basis.apply_transpose(&i_h)));
    }

    let tau = scheme.tau();
    let mut recon = i0.to_vec();
    for n in 1..=scheme.n_steps() {
        let faces = fvm::face_weights_of_channel(&recon, &grid, lambda)?;
        let a = fvm::implicit_system_from_faces(&faces, tau);
        let diag = coarse_operator_diag(basis, &a, &faces, tau);
        // For n > 1 this is R M R^T applied to the previous coefficients,
        // written through the reconstruction since M is the identity.
        let rhs = basis.apply(&recon);
        let op = |x: &[T], y: &mut [T]| {
            let f = basis.apply_transpose(x);
            y.copy_from_slice(&basis.apply(&a.matvec(&f)));
        };
        let i_h = cg_operator(op, dof, &rhs, opts.cg_tol, max_iter, Some(&diag))
            .map_err(coarse_err)?;
        recon = basis.apply_transpose(&i_h);
        observer(n, &recon);
    }
    Ok(clamp01_vec(recon))
}
