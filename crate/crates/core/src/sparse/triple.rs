//! Galerkin triple product R A R^T for row-compact projection matrices.

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::{SparseMatrix, SparseRows};

/// Computes `R A R^T` where `R` is given row-wise with compact supports and
/// `A` is sparse symmetric. The result's sparsity is the overlap pattern of
/// the row supports; it is assembled exactly symmetric.
pub fn triple_product<T: Real>(r: &SparseRows<T>, a: &SparseMatrix<T>) -> Result<SparseMatrix<T>> {
    if r.ncols() != a.n() {
        return Err(Error::DimensionMismatch(format!(
            "R has {} columns but A is {}x{}",
            r.ncols(),
            a.n(),
            a.n()
        )));
    }
    let nrows = r.nrows();
    let ncols = r.ncols();

    // Inverted index: fine column -> rows of R supported there.
    let mut touching: Vec<Vec<u32>> = vec![Vec::new(); ncols];
    for s in 0..nrows {
        for &p in r.row(s).0 {
            touching[p as usize].push(s as u32);
        }
    }

    let mut y = vec![T::zero(); ncols]; // dense workspace for A r_s
    let mut touched: Vec<u32> = Vec::new();
    let mut col_stamp = vec![u32::MAX; ncols];
    let mut stamp = vec![u32::MAX; nrows];
    let mut out_rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); nrows];

    for s in 0..nrows {
        let (s_idx, s_val) = r.row(s);
        // y = A r_s restricted to reachable entries.
        for (&p, &v) in s_idx.iter().zip(s_val) {
            let (cols, vals) = a.row(p as usize);
            for (&c, &av) in cols.iter().zip(vals) {
                let c = c as usize;
                if col_stamp[c] != s as u32 {
                    col_stamp[c] = s as u32;
                    touched.push(c as u32);
                }
                y[c] += av * v;
            }
        }
        // Candidate partners: rows whose support meets the support of y.
        let mut partners: Vec<u32> = Vec::new();
        for &c in &touched {
            for &t in &touching[c as usize] {
                if t as usize <= s && stamp[t as usize] != s as u32 {
                    stamp[t as usize] = s as u32;
                    partners.push(t);
                }
            }
        }
        partners.sort_unstable();
        for &t in &partners {
            let (t_idx, t_val) = r.row(t as usize);
            let mut acc = T::zero();
            for (&p, &v) in t_idx.iter().zip(t_val) {
                acc += v * y[p as usize];
            }
            out_rows[s].push((t as usize, acc));
            if (t as usize) != s {
                out_rows[t as usize].push((s, acc));
            }
        }
        for &c in &touched {
            y[c as usize] = T::zero();
        }
        touched.clear();
    }

    for row in &mut out_rows {
        row.sort_unstable_by_key(|e| e.0);
    }
    SparseMatrix::from_rows(out_rows, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_triple(r: &[f64], nrows: usize, ncols: usize, a: &[f64]) -> Vec<f64> {
        let mut ra = vec![0.0; nrows * ncols];
        for i in 0..nrows {
            for j in 0..ncols {
                let mut acc = 0.0;
                for k in 0..ncols {
                    acc += r[i * ncols + k] * a[k * ncols + j];
                }
                ra[i * ncols + j] = acc;
            }
        }
        let mut g = vec![0.0; nrows * nrows];
        for i in 0..nrows {
            for j in 0..nrows {
                let mut acc = 0.0;
                for k in 0..ncols {
                    acc += ra[i * ncols + k] * r[j * ncols + k];
                }
                g[i * nrows + j] = acc;
            }
        }
        g
    }

    fn identity_rows(n: usize) -> SparseRows<f64> {
        SparseRows::new(
            n,
            (0..n).map(|i| vec![i as u32]).collect(),
            (0..n).map(|_| vec![1.0]).collect(),
        )
        .unwrap()
    }

    fn tridiag(n: usize) -> SparseMatrix<f64> {
        let mut rows = Vec::new();
        for i in 0..n {
            let mut row = Vec::new();
            if i > 0 {
                row.push((i - 1, -1.0));
            }
            row.push((i, 2.0));
            if i + 1 < n {
                row.push((i + 1, -1.0));
            }
            rows.push(row);
        }
        SparseMatrix::from_rows(rows, true).unwrap()
    }

    #[test]
    fn identity_projection_reproduces_a() {
        let a = tridiag(6);
        let g = triple_product(&identity_rows(6), &a).unwrap();
        assert_eq!(g.to_dense(), a.to_dense());
    }

    #[test]
    fn all_ones_row_annihilates_zero_row_sums() {
        // Zero-row-sum stiffness-like matrix.
        let n = 5;
        let mut rows = Vec::new();
        for i in 0..n {
            let mut row = Vec::new();
            let mut diag = 0.0;
            if i > 0 {
                row.push((i - 1, -1.0));
                diag += 1.0;
            }
            let at = row.len();
            row.push((i, 0.0));
            if i + 1 < n {
                row.push((i + 1, -1.0));
                diag += 1.0;
            }
            row[at] = (i, diag);
            rows.push(row);
        }
        let l = SparseMatrix::from_rows(rows, true).unwrap();
        let ones = SparseRows::new(
            n,
            vec![(0..n as u32).collect()],
            vec![vec![1.0f64; n]],
        )
        .unwrap();
        let g = triple_product(&ones, &l).unwrap();
        assert_eq!(g.n(), 1);
        assert!(g.get(0, 0).abs() <= 1e-14);
    }

    #[test]
    fn random_block_matches_dense_oracle() {
        let ncols = 16;
        let nrows = 4;
        let a = tridiag(ncols);
        // Deterministic pseudo-random R with overlapping supports.
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut dense_r = vec![0.0; nrows * ncols];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..nrows {
            let lo = i * 3;
            let hi = (lo + 8).min(ncols);
            let mut idx = Vec::new();
            let mut val = Vec::new();
            for j in lo..hi {
                let v = next();
                dense_r[i * ncols + j] = v;
                idx.push(j as u32);
                val.push(v);
            }
            indices.push(idx);
            values.push(val);
        }
        let r = SparseRows::new(ncols, indices, values).unwrap();
        let g = triple_product(&r, &a).unwrap();
        let expected = dense_triple(&dense_r, nrows, ncols, &a.to_dense());
        for i in 0..nrows {
            for j in 0..nrows {
                assert!(
                    (g.get(i, j) - expected[i * nrows + j]).abs() <= 1e-12,
                    "entry ({i},{j})"
                );
            }
        }
        // Exact symmetry by construction.
        for i in 0..nrows {
            for j in 0..nrows {
                assert_eq!(g.get(i, j), g.get(j, i));
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = tridiag(4);
        let r = identity_rows(5);
        assert!(matches!(
            triple_product(&r, &a),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
