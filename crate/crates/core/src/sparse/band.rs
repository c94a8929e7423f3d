//! Direct solver for symmetric positive definite banded systems.

use crate::scalar::Real;

use super::SparseMatrix;

// Panel width for the blocked elimination; bands narrower than a couple of
// panels gain nothing from the deferred updates.
const PANEL: usize = 48;

/// Cholesky factorization in lower banded storage, for repeated direct
/// solves and for preconditioning iterative solves on nearby systems.
#[derive(Debug, Clone)]
pub struct BandCholesky<T> {
    n: usize,
    hb: usize,
    // Lower factor by columns with uniform stride `hb + 1`:
    // `L[i][j] = cols[j * (hb + 1) + (i - j)]` for `j <= i <= j + hb`.
    cols: Vec<T>,
}

impl<T: Real> BandCholesky<T> {
    /// Factors a symmetric CSR matrix, reading its lower triangle. Returns
    /// `None` when a pivot falls to roundoff scale, which covers indefinite
    /// and numerically singular inputs.
    pub fn factor(a: &SparseMatrix<T>) -> Option<Self> {
        Self::factor_clipped(a, usize::MAX)
    }

    /// [`BandCholesky::factor`] with entries beyond `max_hb` off the
    /// diagonal dropped, factoring a nearby matrix that serves as a
    /// preconditioner when the clipped entries are small.
    pub fn factor_clipped(a: &SparseMatrix<T>, max_hb: usize) -> Option<Self> {
        let n = a.n();
        if n == 0 {
            return None;
        }
        let mut hb = 0usize;
        for i in 0..n {
            let (cols_i, _) = a.row(i);
            if let Some(&first) = cols_i.first() {
                hb = hb.max(i.saturating_sub(first as usize));
            }
            if let Some(&last) = cols_i.last() {
                hb = hb.max((last as usize).saturating_sub(i));
            }
        }
        let hb = hb.min(max_hb);
        let w = hb + 1;
        let mut cols = vec![T::zero(); n * w];
        for i in 0..n {
            let (cidx, vals) = a.row(i);
            for (&j, &v) in cidx.iter().zip(vals) {
                let j = j as usize;
                if j <= i && i - j <= hb {
                    cols[j * w + (i - j)] = v;
                }
            }
        }

        let mut dmax = T::zero();
        for j in 0..n {
            dmax = dmax.max(cols[j * w]);
        }
        let floor = dmax * T::epsilon() * T::from_f64_c(n as f64);

        if hb < 2 * PANEL {
            eliminate_panel(&mut cols, n, hb, floor, 0, n)?;
            return Some(Self { n, hb, cols });
        }

        // Wide bands run panel by panel: scalar elimination inside the
        // panel, then one deferred update of the trailing region formed as
        // `P P^T` over the panel rows below it. The region is at most
        // `hb` wide, so the two products stay near square and the symmetric
        // result can be subtracted row by row into contiguous band columns.
        let mut p = vec![T::zero(); hb * PANEL];
        let mut c_tl = vec![T::zero(); (hb / 2) * (hb / 2)];
        let mut c_r = vec![T::zero(); hb * (hb - hb / 2)];
        let mut j0 = 0;
        while j0 < n {
            let ib = PANEL.min(n - j0);
            eliminate_panel(&mut cols, n, hb, floor, j0, ib)?;
            let r0 = j0 + ib;
            let r1 = n.min(j0 + ib + hb);
            if r0 >= r1 {
                j0 += ib;
                continue;
            }
            let s = r1 - r0;
            let pr = &mut p[..s * ib];
            pr.fill(T::zero());
            for jj in 0..ib {
                let j = j0 + jj;
                let rend = (j + hb).min(r1 - 1);
                let src = &cols[j * w + (r0 - j)..j * w + (rend - j) + 1];
                for (rr, &v) in src.iter().enumerate() {
                    pr[rr * ib + jj] = v;
                }
            }
            let s1 = s / 2;
            let s2 = s - s1;
            T::gemm_nt(s1, s1, ib, &pr[..s1 * ib], &pr[..s1 * ib], &mut c_tl[..s1 * s1]);
            T::gemm_nt(s, s2, ib, pr, &pr[s1 * ib..], &mut c_r[..s * s2]);
            for cc in 0..s {
                let dst = &mut cols[(r0 + cc) * w..(r0 + cc) * w + (s - cc)];
                // Row `cc` of the symmetric product supplies the column.
                if cc < s1 {
                    let top = &c_tl[cc * s1 + cc..(cc + 1) * s1];
                    for (dv, sv) in dst[..s1 - cc].iter_mut().zip(top) {
                        *dv -= *sv;
                    }
                    let right = &c_r[cc * s2..(cc + 1) * s2];
                    for (dv, sv) in dst[s1 - cc..].iter_mut().zip(right) {
                        *dv -= *sv;
                    }
                } else {
                    let right = &c_r[cc * s2 + (cc - s1)..(cc + 1) * s2];
                    for (dv, sv) in dst.iter_mut().zip(right) {
                        *dv -= *sv;
                    }
                }
            }
            j0 += ib;
        }
        Some(Self { n, hb, cols })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.hb
    }

    /// Solves `A x = b` by the two triangular sweeps.
    pub fn solve_into(&self, b: &[T], x: &mut [T]) {
        assert_eq!(b.len(), self.n);
        assert_eq!(x.len(), self.n);
        x.copy_from_slice(b);
        let w = self.hb + 1;
        for j in 0..self.n {
            let lim = self.hb.min(self.n - 1 - j);
            let cj = &self.cols[j * w..j * w + lim + 1];
            let xj = x[j] / cj[0];
            x[j] = xj;
            let tail = &mut x[j + 1..j + lim + 1];
            for (xv, lv) in tail.iter_mut().zip(&cj[1..]) {
                *xv -= *lv * xj;
            }
        }
        for j in (0..self.n).rev() {
            let lim = self.hb.min(self.n - 1 - j);
            let cj = &self.cols[j * w..j * w + lim + 1];
            let mut acc = x[j];
            for (lv, xv) in cj[1..].iter().zip(&x[j + 1..j + lim + 1]) {
                acc -= *lv * *xv;
            }
            x[j] = acc / cj[0];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = vec![T::zero(); self.n];
        self.solve_into(b, &mut x);
        x
    }
}

// Scalar elimination of columns `j0..j0 + ib`, updating later columns only
// inside the panel; columns past it are the caller's concern.
fn eliminate_panel<T: Real>(
    cols: &mut [T],
    n: usize,
    hb: usize,
    floor: T,
    j0: usize,
    ib: usize,
) -> Option<()> {
    let w = hb + 1;
    for j in j0..j0 + ib {
        let lim = hb.min(n - 1 - j);
        let d = cols[j * w];
        if !(d > floor) {
            return None;
        }
        let d = d.sqrt();
        cols[j * w] = d;
        let inv = T::one() / d;
        for t in 1..=lim {
            cols[j * w + t] *= inv;
        }
        let reach = lim.min(j0 + ib - 1 - j);
        for t in 1..=reach {
            let ljt = cols[j * w + t];
            if ljt == T::zero() {
                continue;
            }
            // Column j + t loses the rank-one contribution of column j.
            let (head, tail) = cols.split_at_mut((j + t) * w);
            let src = &head[j * w + t..j * w + lim + 1];
            let dst = &mut tail[..lim + 1 - t];
            for (dv, sv) in dst.iter_mut().zip(src) {
                *dv -= ljt * *sv;
            }
        }
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize, diag: f64, off: f64) -> SparseMatrix<f64> {
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::new();
            if i > 0 {
                row.push((i - 1, off));
            }
            row.push((i, diag));
            if i + 1 < n {
                row.push((i + 1, off));
            }
            rows.push(row);
        }
        SparseMatrix::from_rows(rows, true).unwrap()
    }

    #[test]
    fn tridiagonal_solve_is_exact() {
        let a = tridiag(2, 2.0, -1.0);
        let x = BandCholesky::factor(&a).unwrap().solve(&[1.0, 1.0]);
        assert!((x[0] - 1.0).abs() <= 1e-14);
        assert!((x[1] - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn matches_the_matrix_on_random_rhs() {
        let n = 60;
        let a = tridiag(n, 2.4, -0.9);
        let f = BandCholesky::factor(&a).unwrap();
        assert_eq!(f.half_bandwidth(), 1);
        let b: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64) / 11.0 - 0.4).collect();
        let x = f.solve(&b);
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() <= 1e-12, "{ri} vs {bi}");
        }
    }

    #[test]
    fn wide_band_from_scattered_couplings() {
        // Strictly diagonally dominant, bandwidth 3.
        let n = 24;
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::new();
            if i >= 3 {
                row.push((i - 3, 0.3));
            }
            if i >= 1 {
                row.push((i - 1, -1.1));
            }
            row.push((i, 4.0));
            if i + 1 < n {
                row.push((i + 1, -1.1));
            }
            if i + 3 < n {
                row.push((i + 3, 0.3));
            }
            rows.push(row);
        }
        let a = SparseMatrix::from_rows(rows, true).unwrap();
        let f = BandCholesky::factor(&a).unwrap();
        assert_eq!(f.half_bandwidth(), 3);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let x = f.solve(&b);
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() <= 1e-12);
        }
    }

    #[test]
    fn wide_bands_take_the_panel_path() {
        let n = 400;
        let hb = 2 * PANEL + 7;
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::new();
            let mut dom = 1.0;
            for j in i.saturating_sub(hb)..(i + hb + 1).min(n) {
                if j == i {
                    continue;
                }
                let (a, b) = (i.min(j), i.max(j));
                if (a * 31 + b * 17) % 5 == 0 {
                    continue;
                }
                let v = ((a * 13 + b * 7) as f64 * 0.61).sin() * 0.5;
                dom += v.abs();
                row.push((j, v));
            }
            row.push((i, dom));
            row.sort_by_key(|&(j, _)| j);
            rows.push(row);
        }
        let a = SparseMatrix::from_rows(rows, true).unwrap();
        let f = BandCholesky::factor(&a).unwrap();
        assert!(f.half_bandwidth() >= 2 * PANEL);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos()).collect();
        let x = f.solve(&b);
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() <= 1e-10, "{ri} vs {bi}");
        }
    }

    #[test]
    fn singular_and_indefinite_inputs_are_rejected()  {
        let singular = SparseMatrix::from_rows(
            vec![vec![(0, 1.0f64), (1, 1.0)], vec![(0, 1.0), (1, 1.0)]],
            true,
        )
        .unwrap();
        assert!(BandCholesky::factor(&singular).is_none());

        let indefinite = tridiag(5, -2.0, 0.5);
        assert!(BandCholesky::factor(&indefinite).is_none());

        // Indefiniteness that only shows up during elimination.
        let hidden = SparseMatrix::from_rows(
            vec![vec![(0, 1.0f64), (1, 2.0)], vec![(0, 2.0), (1, 1.0)]],
            true,
        )
        .unwrap();
        assert!(BandCholesky::factor(&hidden).is_none());
    }

    #[test]
    fn reuse_of_one_factorization_is_consistent() {
        let a = tridiag(30, 3.0, 1.0);
        let f = BandCholesky::factor(&a).unwrap();
        let b1: Vec<f64> = (0..30).map(|i| i as f64 / 30.0).collect();
        let x1 = f.solve(&b1);
        let x2 = f.solve(&b1);
        assert_eq!(x1, x2);
        let mut x3 = vec![0.0; 30];
        f.solve_into(&b1, &mut x3);
        assert_eq!(x1, x3);
    }
}
