use rayon::prelude::*;

use super::{hyper, rows_f64, Embedding, Method};
use crate::error::{Error, Result};
use crate::graph::{knn_graph, NeighborGraph};
use crate::spectral::{sym_eigen, Matrix, Which};
use crate::tensor::Tensor;

/// Barycentric reconstruction weights, one row of `k` per point, aligned
/// with the neighbor lists of `graph`.
#[derive(Clone, Debug)]
pub struct LleWeights {
    pub graph: NeighborGraph,
    pub w: Vec<f64>,
}

impl LleWeights {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.graph.k..(i + 1) * self.graph.k]
    }
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap();
        if a[piv * n + col].abs() <= 1e-13 * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        for r in col + 1..n {
            let f = a[r * n + col] / a[col * n + col];
            if f != 0.0 {
                for k in col..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        let s: f64 = (col + 1..n).map(|k| a[col * n + k] * b[k]).sum();
        b[col] = (b[col] - s) / a[col * n + col];
    }
    Some(b)
}

/// Local Gram `G = (x_i - X_N)(x_i - X_N)^T` regularized with
/// `reg * trace(G) / k` on the diagonal (or `reg` when the trace is zero),
/// then `w = G^{-1} 1` normalized to sum to one.
pub fn lle_weights(x: &Tensor, g: &NeighborGraph, reg: f64) -> Result<LleWeights> {
    if !(reg >= 0.0) {
        return Err(Error::Parameter(format!("reg must be nonnegative, got {reg}")));
    }
    let (n, dim, xs) = rows_f64(x)?;
    if n != g.n {
        return Err(Error::shape("lle_weights", format!("{n} points but graph has {}", g.n)));
    }
    let k = g.k;
    let rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &xs[i * dim..(i + 1) * dim];
            let z: Vec<Vec<f64>> = g
                .row(i)
                .0
                .iter()
                .map(|&j| xs[j * dim..(j + 1) * dim].iter().zip(xi).map(|(a, b)| a - b).collect())
                .collect();
            let mut gram = vec![0.0; k * k];
            for a in 0..k {
                for b in a..k {
                    let v: f64 = z[a].iter().zip(&z[b]).map(|(p, q)| p * q).sum();
                    gram[a * k + b] = v;
                    gram[b * k + a] = v;
                }
            }
            let trace: f64 = (0..k).map(|a| gram[a * k + a]).sum();
            let r = if trace > 0.0 { reg * trace / k as f64 } else { reg };
            for a in 0..k {
                gram[a * k + a] += r;
            }
            let w = solve_dense(gram, vec![1.0; k], k)
                .ok_or_else(|| Error::Solver(format!("singular local Gram matrix at point {i}")))?;
            let s: f64 = w.iter().sum();
            if !s.is_finite() || s == 0.0 {
                return Err(Error::Solver(format!("degenerate weights at point {i}")));
            }
            Ok(w.into_iter().map(|v| v / s).collect())
        })
        .collect();
    let mut w = Vec::with_capacity(n * k);
    for r in rows {
        w.extend(r?);
    }
    Ok(LleWeights { graph: g.clone(), w })
}

/// `M = (I - W)^T (I - W)` as a dense matrix.
pub(crate) fn lle_cost_matrix(lw: &LleWeights) -> Matrix {
    let n = lw.graph.n;
    let mut m = Matrix::identity(n);
    for i in 0..n {
        let (nb, _) = lw.graph.row(i);
        let w = lw.row(i);
        for (a, &ja) in nb.iter().enumerate() {
            m.data[i * n + ja] -= w[a];
            m.data[ja * n + i] -= w[a];
            for (b, &jb) in nb.iter().enumerate() {
                m.data[ja * n + jb] += w[a] * w[b];
            }
        }
    }
    m
}

/// Locally linear embedding: bottom `d` nontrivial eigenvectors of the
/// reconstruction cost matrix, scaled by `sqrt(n)`.
pub fn lle_embed(x: &Tensor, k: usize, d: usize, reg: f64) -> Result<Embedding> {
    let n = x.rows();
    if d == 0 || d + 1 >= n {
        return Err(Error::Parameter(format!("need 1 <= d < n - 1, got d={d}, n={n}")));
    }
    let g = knn_graph(x, k)?;
    g.ensure_connected()?;
    let lw = lle_weights(x, &g, reg)?;
    let m = lle_cost_matrix(&lw);
    let eig = sym_eigen(&m, Which::Smallest, d + 1)?;
    let scale = (n as f64).sqrt();
    let mut coords = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..d {
            coords[i * d + j] = eig.vectors.get(i, j + 1) * scale;
        }
    }
    let mut diagnostics = hyper(&[("null_eigenvalue", eig.values[0])]);
    diagnostics.insert("largest_kept_eigenvalue".into(), eig.values[d]);
    Ok(Embedding {
        method: Method::Lle,
        coords: Tensor::matrix_from_f64(n, d, &coords)?,
        hyper: hyper(&[("k", k as f64), ("d", d as f64), ("reg", reg)]),
        standardization: None,
        diagnostics,
    })
}
