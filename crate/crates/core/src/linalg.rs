//! Eigensolvers used by the spectral analysis.
//!
//! Sector blocks are tridiagonal. When every product `lower[i]·upper[i]` is
//! positive the block is similar to a real symmetric tridiagonal matrix (up to
//! a constant complex shift) and is solved with implicit QL plus inverse
//! iteration. Anything else goes through the dense LAPACK route.

use ndarray::Array2;
use ndarray_linalg::Eig;
use num_complex::Complex64 as C64;

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `diag` and
/// off-diagonal `off` (implicit QL with Wilkinson-style shifts).
///
/// Returns `None` if some eigenvalue fails to converge.
pub fn symmetric_tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    assert_eq!(off.len(), n.saturating_sub(1));
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return None;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Some(d)
}

/// Solves `(T − σ) x = rhs` for symmetric tridiagonal `T` with partial
/// pivoting; tiny pivots are replaced by `tiny` so that shifts sitting on an
/// eigenvalue still produce a (huge) finite solution.
fn shifted_tridiagonal_solve(diag: &[f64], off: &[f64], sigma: f64, rhs: &[f64], tiny: f64) -> Vec<f64> {
    let n = diag.len();
    if n == 1 {
        let piv = diag[0] - sigma;
        let piv = if piv.abs() < tiny { tiny } else { piv };
        return vec![rhs[0] / piv];
    }
    // Row i of U holds (u0[i], u1[i], u2[i]) at columns i, i+1, i+2.
    let mut u0 = vec![0.0; n];
    let mut u1 = vec![0.0; n];
    let mut u2 = vec![0.0; n];
    let mut b = rhs.to_vec();
    // Current working row: (a0, a1) at columns (i, i+1).
    let mut a0 = diag[0] - sigma;
    let mut a1 = off[0];
    for i in 0..n - 1 {
        // Next row has entries (off[i], diag[i+1]-σ, off[i+1]) at (i, i+1, i+2).
        let nb0 = off[i];
        let nb1 = diag[i + 1] - sigma;
        let nb2 = if i + 2 < n { off[i + 1] } else { 0.0 };
        if nb0.abs() > a0.abs() {
            // Swap rows.
            u0[i] = nb0;
            u1[i] = nb1;
            u2[i] = nb2;
            b.swap(i, i + 1);
            let mult = a0 / nb0;
            a0 = a1 - mult * nb1;
            a1 = -mult * nb2;
            b[i + 1] -= mult * b[i];
        } else {
            let piv = if a0.abs() < tiny { tiny } else { a0 };
            u0[i] = piv;
            u1[i] = a1;
            u2[i] = 0.0;
            let mult = nb0 / piv;
            a0 = nb1 - mult * a1;
            a1 = nb2;
            b[i + 1] -= mult * b[i];
        }
    }
    u0[n - 1] = if a0.abs() < tiny { tiny } else { a0 };
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = b[i];
        if i + 1 < n {
            acc -= u1[i] * x[i + 1];
        }
        if i + 2 < n {
            acc -= u2[i] * x[i + 2];
        }
        x[i] = acc / u0[i];
    }
    x
}

fn normalize(v: &mut [f64]) -> f64 {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return 0.0;
    }
    for x in v.iter_mut() {
        *x /= scale;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
    norm * scale
}

/// Eigenvectors of a symmetric tridiagonal matrix for the given eigenvalues
/// (inverse iteration, re-orthogonalized inside clusters of close
/// eigenvalues). Column `j` of the result belongs to `eigenvalues[j]`.
pub fn symmetric_tridiagonal_eigenvectors(diag: &[f64], off: &[f64], eigenvalues: &[f64]) -> Vec<Vec<f64>> {
    let n = diag.len();
    let tnorm = diag
        .iter()
        .enumerate()
        .map(|(i, d)| d.abs() + if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 })
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * tnorm;
    let cluster_gap = 1e-3 * tnorm;

    // Work through eigenvalues in ascending order so clusters are contiguous.
    let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]));

    let mut vectors: Vec<Vec<f64>> = vec![Vec::new(); eigenvalues.len()];
    let mut cluster: Vec<usize> = Vec::new();
    let mut prev: Option<f64> = None;
    for (pos, &idx) in order.iter().enumerate() {
        let lambda = eigenvalues[idx];
        if let Some(p) = prev {
            if lambda - p > cluster_gap {
                cluster.clear();
            }
        }
        prev = Some(lambda);
        // Deterministic, generic start vector.
        let mut x: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * (((i * 7919 + pos * 104_729) % 1013) as f64 / 1013.0))
            .collect();
        normalize(&mut x);
        for _ in 0..4 {
            let mut y = shifted_tridiagonal_solve(diag, off, lambda, &x, tiny);
            for &c in &cluster {
                let v: &Vec<f64> = &vectors[c];
                let dot: f64 = v.iter().zip(&y).map(|(a, b)| a * b).sum();
                for (yi, vi) in y.iter_mut().zip(v) {
                    *yi -= dot * vi;
                }
            }
            if normalize(&mut y) == 0.0 {
                break;
            }
            x = y;
        }
        vectors[idx] = x;
        cluster.push(idx);
    }
    vectors
}

/// Dense eigendecomposition of a general complex matrix (LAPACK `zgeev`).
/// Eigenvectors are returned as unit-norm columns.
pub fn dense_eig(matrix: &Array2<C64>) -> Result<(Vec<C64>, Array2<C64>), String> {
    let (vals, mut vecs) = matrix.eig().map_err(|e| e.to_string())?;
    for mut col in vecs.columns_mut() {
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            col.mapv_inplace(|z| z / norm);
        }
    }
    Ok((vals.to_vec(), vecs))
}

/// Dense eigenvalues only.
pub fn dense_eigenvalues(matrix: &Array2<C64>) -> Result<Vec<C64>, String> {
    use ndarray_linalg::EigVals;
    matrix.eigvals().map(|v| v.to_vec()).map_err(|e| e.to_string())
}
