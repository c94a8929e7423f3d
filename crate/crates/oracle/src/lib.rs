//! Dense reference solvers used to cross-check the sparse kernels in tests.
//!
//! Everything here trades speed for obviousness: full matrices as nested
//! `Vec`s, textbook algorithms, and no code shared with the main crate, so
//! an agreement between the two is evidence rather than tautology.

/// Dense matrix-vector product.
pub fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| {
            assert_eq!(row.len(), x.len());
            row.iter().zip(x).map(|(&m, &v)| m * v).sum()
        })
        .collect()
}

/// Solves `A x = b` by LU factorization with partial pivoting.
///
/// Returns `None` when a pivot vanishes (singular matrix).
pub fn lu_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    assert_eq!(b.len(), n);
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for row in &m {
        assert_eq!(row.len(), n);
    }
    let mut x = b.to_vec();

    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot][col].abs() < f64::MIN_POSITIVE {
            return None;
        }
        m.swap(col, pivot);
        x.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            x[row] -= f * x[col];
        }
    }
    for row in (0..n).rev() {
        let mut s = x[row];
        for k in row + 1..n {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    Some(x)
}

/// Full spectrum of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues ascending and unit-norm eigenvectors, one row per
/// pair (`vectors[k][i]` is component `i` of the eigenvector for
/// `values[k]`).
pub fn sym_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for row in &m {
        assert_eq!(row.len(), n);
    }
    let mut v = vec![vec![0.0; n]; n];
    for (k, row) in v.iter_mut().enumerate() {
        row[k] = 1.0;
    }

    let fro_sq: f64 = m.iter().flatten().map(|&e| e * e).sum();
    let stop = fro_sq * 1e-28 + f64::MIN_POSITIVE;

    for _sweep in 0..60 {
        let off_sq: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| m[p][q] * m[p][q])
            .sum();
        if off_sq <= stop {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p][q];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                let app = m[p][p];
                let aqq = m[q][q];
                m[p][p] = app - t * apq;
                m[q][q] = aqq + t * apq;
                m[p][q] = 0.0;
                m[q][p] = 0.0;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m[k][p];
                    let akq = m[k][q];
                    m[k][p] = c * akp - s * akq;
                    m[p][k] = m[k][p];
                    m[k][q] = s * akp + c * akq;
                    m[q][k] = m[k][q];
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i][i].total_cmp(&m[j][j]));
    let values: Vec<f64> = order.iter().map(|&k| m[k][k]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| (0..n).map(|i| v[i][k]).collect())
        .collect();
    (values, vectors)
}

/// Full spectrum of the generalized problem `A x = lambda D x` with a
/// positive diagonal `D`, via the substitution `B = D^-1/2 A D^-1/2`.
///
/// Eigenvectors come back with unit Euclidean norm.
pub fn generalized_sym_eigen(a: &[Vec<f64>], d: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    assert_eq!(d.len(), n);
    assert!(d.iter().all(|&w| w > 0.0), "D must be positive");
    let root: Vec<f64> = d.iter().map(|&w| w.sqrt()).collect();
    let b: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| a[i][j] / (root[i] * root[j])).collect())
        .collect();
    let (values, ys) = sym_eigen(&b);
    let vectors = ys
        .into_iter()
        .map(|y| {
            let x: Vec<f64> = y.iter().zip(&root).map(|(&yi, &ri)| yi / ri).collect();
            let norm = x.iter().map(|&e| e * e).sum::<f64>().sqrt();
            x.into_iter().map(|e| e / norm).collect()
        })
        .collect();
    (values, vectors)
}

/// Dense Galerkin product `R A R^T`.
pub fn triple_product(r: &[Vec<f64>], a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let ar: Vec<Vec<f64>> = r.iter().map(|row| matvec(a, row)).collect();
    r.iter()
        .map(|ri| {
            ar.iter()
                .map(|aj| ri.iter().zip(aj).map(|(&x, &y)| x * y).sum())
                .collect()
        })
        .collect()
}

/// Dense diffusion stiffness matrix for one image channel, assembled from
/// scratch: clamped central differences, the rational edge-stopping
/// coefficient, and harmonic face averages on the unit pixel grid with
/// zero-flux boundaries.
pub fn diffusion_matrix(image: &[f64], nx: usize, ny: usize, lambda: f64) -> Vec<Vec<f64>> {
    assert!(nx > 0 && ny > 0);
    assert_eq!(image.len(), nx * ny);
    assert!(lambda > 0.0);
    let at = |x: usize, y: usize| image[y * nx + x];

    let mut coeff = vec![0.0; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            let xp = if x + 1 < nx { x + 1 } else { nx - 1 };
            let xm = x.saturating_sub(1);
            let yp = if y + 1 < ny { y + 1 } else { ny - 1 };
            let ym = y.saturating_sub(1);
            let gx = (at(xp, y) - at(xm, y)) / 2.0;
            let gy = (at(x, yp) - at(x, ym)) / 2.0;
            coeff[y * nx + x] = 1.0 / (1.0 + (gx * gx + gy * gy) / (lambda * lambda));
        }
    }

    let n = nx * ny;
    let mut l = vec![vec![0.0; n]; n];
    let couple = |l: &mut Vec<Vec<f64>>, p: usize, q: usize| {
        let w = 2.0 / (1.0 / coeff[p] + 1.0 / coeff[q]);
        l[p][p] += w;
        l[q][q] += w;
        l[p][q] -= w;
        l[q][p] -= w;
    };
    for y in 0..ny {
        for x in 0..nx - 1 {
            let p = y * nx + x;
            couple(&mut l, p, p + 1);
        }
    }
    for y in 0..ny - 1 {
        for x in 0..nx {
            let p = y * nx + x;
            couple(&mut l, p, p + nx);
        }
    }
    l
}
