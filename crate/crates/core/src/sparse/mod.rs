//! Sparse symmetric linear algebra: CSR storage, conjugate gradients,
//! symmetric eigensolvers, and Galerkin triple products.

mod band;
mod cg;
mod dense;
mod eigen;
mod lanczos;
mod triple;

pub(crate) use cg::{cg_operator, pcg_operator};
pub use band::BandCholesky;
pub use cg::{cg_solve, cg_solve_jacobi};
pub use dense::sym_eigen;
pub use eigen::{smallest_eigenpairs, smallest_eigenpairs_with, EigenOptions, EigenPairs};
pub use triple::triple_product;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Square sparse matrix in CSR form with strictly increasing column indices
/// per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<T>,
    symmetric: bool,
}

impl<T: Real> SparseMatrix<T> {
    /// Builds from per-row `(column, value)` lists. Columns must be strictly
    /// increasing within each row and inside `0..n`.
    pub fn from_rows(rows: Vec<Vec<(usize, T)>>, symmetric: bool) -> Result<Self> {
        let n = rows.len();
        if n > u32::MAX as usize {
            return Err(Error::InvalidParameter(format!(
                "matrix dimension {n} exceeds CSR index range"
            )));
        }
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            let mut last: Option<usize> = None;
            for (j, v) in row {
                if j >= n {
                    return Err(Error::InvalidParameter(format!(
                        "column {j} out of range in row {i} of an {n}x{n} matrix"
                    )));
                }
                if let Some(prev) = last {
                    if j <= prev {
                        return Err(Error::InvalidParameter(format!(
                            "columns in row {i} are not strictly increasing"
                        )));
                    }
                }
                last = Some(j);
                col_idx.push(j as u32);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
            symmetric,
        })
    }

    /// Assembles directly from CSR arrays produced by a trusted builder.
    pub(crate) fn from_parts(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<u32>,
        values: Vec<T>,
        symmetric: bool,
    ) -> Self {
        debug_assert_eq!(row_ptr.len(), n + 1);
        debug_assert_eq!(col_idx.len(), values.len());
        debug_assert_eq!(*row_ptr.last().unwrap_or(&0), col_idx.len());
        debug_assert!(row_ptr.windows(2).all(|w| {
            let cols = &col_idx[w[0]..w[1]];
            cols.windows(2).all(|c| c[0] < c[1])
        }));
        Self {
            n,
            row_ptr,
            col_idx,
            values,
            symmetric,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, i: usize) -> (&[u32], &[T]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(p) => vals[p],
            Err(_) => T::zero(),
        }
    }

    /// Mutable view of the stored values for in-place refills; the length
    /// must stay what it is and symmetric matrices must stay symmetric.
    pub(crate) fn values_mut(&mut self) -> &mut Vec<T> {
        &mut self.values
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            let mut acc = T::zero();
            for k in lo..hi {
                acc += self.values[k] * x[self.col_idx[k] as usize];
            }
            y[i] = acc;
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Returns `diag(s) * A * diag(s)`; keeps the symmetry flag.
    pub fn symmetric_scale(&self, s: &[T]) -> SparseMatrix<T> {
        assert_eq!(s.len(), self.n);
        let mut out = self.clone();
        for i in 0..self.n {
            let lo = out.row_ptr[i];
            let hi = out.row_ptr[i + 1];
            for k in lo..hi {
                out.values[k] = s[i] * out.values[k] * s[out.col_idx[k] as usize];
            }
        }
        out
    }

    /// Adds `shift` to every diagonal entry. The diagonal must already be
    /// structurally present.
    pub fn with_diagonal_shift(&self, shift: T) -> SparseMatrix<T> {
        let mut out = self.clone();
        for i in 0..self.n {
            let lo = out.row_ptr[i];
            let hi = out.row_ptr[i + 1];
            let p = out.col_idx[lo..hi]
                .binary_search(&(i as u32))
                .expect("diagonal entry missing from sparsity pattern");
            out.values[lo + p] += shift;
        }
        out
    }

    /// Dense row-major copy, for tests and small dense fallbacks.
    pub fn to_dense(&self) -> Vec<T> {
        let mut dense = vec![T::zero(); self.n * self.n];
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                dense[i * self.n + *c as usize] = *v;
            }
        }
        dense
    }

    /// Largest row sum of absolute values; bounds the spectral radius.
    pub fn inf_norm(&self) -> T {
        let mut best = T::zero();
        for i in 0..self.n {
            let (_, vals) = self.row(i);
            let s = vals.iter().fold(T::zero(), |acc, v| acc + v.abs());
            if s > best {
                best = s;
            }
        }
        best
    }
}

/// Diagonal matrix stored as its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalMatrix<T> {
    diag: Vec<T>,
}

impl<T: Real> DiagonalMatrix<T> {
    pub fn new(diag: Vec<T>) -> Self {
        Self { diag }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            diag: vec![T::one(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[T] {
        &self.diag
    }
}

/// Row-block of a wide sparse matrix: each row stores its support as sorted
/// global column indices plus values. Used for Galerkin projections where
/// rows are compact but dense within their support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows<T> {
    ncols: usize,
    indices: Vec<Vec<u32>>,
    values: Vec<Vec<T>>,
}

impl<T: Real> SparseRows<T> {
    pub fn new(ncols: usize, indices: Vec<Vec<u32>>, values: Vec<Vec<T>>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} index rows vs {} value rows",
                indices.len(),
                values.len()
            )));
        }
        for (r, (idx, val)) in indices.iter().zip(&values).enumerate() {
            if idx.len() != val.len() {
                return Err(Error::DimensionMismatch(format!(
                    "row {r}: {} indices vs {} values",
                    idx.len(),
                    val.len()
                )));
            }
            if !idx.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::InvalidParameter(format!(
                    "row {r}: support indices are not strictly increasing"
                )));
            }
            if idx.last().is_some_and(|&last| last as usize >= ncols) {
                return Err(Error::InvalidParameter(format!(
                    "row {r}: support exceeds {ncols} columns"
                )));
            }
        }
        Ok(Self {
            ncols,
            indices,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.indices.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, r: usize) -> (&[u32], &[T]) {
        (&self.indices[r], &self.values[r])
    }
}
