//! t-SNE with exact and Barnes-Hut gradients.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::bhtree::BhTree;
use super::{hyper, rows_f64, Embedding, Method};
use crate::error::{Error, Result};
use crate::graph::knn_graph;
use crate::rng::seeded;
use crate::spectral::{sym_eigen, Matrix, Which};
use crate::tensor::Tensor;

const BRACKET_DOUBLINGS: usize = 64;
const ENTROPY_TOL: f64 = 1e-5;

fn entropy_and_probs(d2: &[f64], dmin: f64, beta: f64, p: &mut [f64]) -> f64 {
    let mut z = 0.0;
    let mut acc = 0.0;
    for (pj, &d) in p.iter_mut().zip(d2) {
        let s = d - dmin;
        let w = (-beta * s).exp();
        *pj = w;
        z += w;
        acc += w * s;
    }
    for pj in p.iter_mut() {
        *pj /= z;
    }
    z.ln() + beta * acc / z
}

/// Finds the precision `beta` of the Gaussian conditional
/// `p_j ~ exp(-beta d2_j)` whose Shannon entropy (natural log) equals
/// `ln(perplexity)`.
///
/// The search starts at `1 / mean(d2 - min d2)` and moves by doublings and
/// bisection, so scaling every squared distance by a power of two scales
/// every iterate of `beta` exactly inversely.
pub fn perplexity_calibrate(d2_row: &[f64], perplexity: f64) -> Result<(f64, Vec<f64>)> {
    let m = d2_row.len();
    if m == 0 {
        return Err(Error::Parameter("empty distance row".into()));
    }
    if !(perplexity >= 1.0) || perplexity >= m as f64 + 1e-12 && m > 1 {
        return Err(Error::Parameter(format!(
            "perplexity {perplexity} must be in [1, {m})"
        )));
    }
    if d2_row.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
        return Err(Error::Parameter("squared distances must be finite and nonnegative".into()));
    }
    let target = perplexity.ln();
    let dmin = d2_row.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = d2_row.iter().map(|d| d - dmin).sum::<f64>() / m as f64;
    let mut p = vec![0.0; m];
    if spread == 0.0 {
        let h = entropy_and_probs(d2_row, dmin, 1.0, &mut p);
        if (h - target).abs() <= ENTROPY_TOL {
            return Ok((1.0, p));
        }
        return Err(Error::Calibration(format!(
            "all distances equal: entropy is fixed at {h}, target {target}"
        )));
    }
    let mut beta = 1.0 / spread;
    let mut h = entropy_and_probs(d2_row, dmin, beta, &mut p);
    let (mut lo, mut hi);
    if h > target {
        lo = beta;
        let mut found = false;
        for _ in 0..BRACKET_DOUBLINGS {
            beta *= 2.0;
            h = entropy_and_probs(d2_row, dmin, beta, &mut p);
            if h <= target {
                found = true;
                break;
            }
            lo = beta;
        }
        hi = beta;
        if !found {
            return Err(Error::Calibration(format!(
                "entropy stays above ln({perplexity}) after {BRACKET_DOUBLINGS} doublings"
            )));
        }
    } else {
        hi = beta;
        let mut found = false;
        for _ in 0..BRACKET_DOUBLINGS {
            beta *= 0.5;
            h = entropy_and_probs(d2_row, dmin, beta, &mut p);
            if h >= target {
                found = true;
                break;
            }
            hi = beta;
        }
        lo = beta;
        if !found {
            return Err(Error::Calibration(format!(
                "entropy stays below ln({perplexity}) after {BRACKET_DOUBLINGS} halvings"
            )));
        }
    }
    let mut best = (f64::INFINITY, beta);
    for _ in 0..200 {
        if h == target || hi - lo <= 1e-15 * hi {
            break;
        }
        beta = 0.5 * (lo + hi);
        h = entropy_and_probs(d2_row, dmin, beta, &mut p);
        if (h - target).abs() < best.0 {
            best = ((h - target).abs(), beta);
        }
        if h > target {
            lo = beta;
        } else {
            hi = beta;
        }
    }
    let err = (entropy_and_probs(d2_row, dmin, best.1, &mut p) - target).abs();
    if err > ENTROPY_TOL {
        return Err(Error::Calibration(format!(
            "entropy error {err:e} after bisection"
        )));
    }
    Ok((best.1, p))
}

fn pairwise_sq(y: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = (0..d).map(|c| (y[i * d + c] - y[j * d + c]).powi(2)).sum();
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    out
}

/// Dense symmetric joint probabilities
/// `p_ij = (p_{j|i} + p_{i|j}) / (2n)` over all pairs.
pub fn joint_probabilities(x: &[f64], n: usize, dim: usize, perplexity: f64) -> Result<Matrix> {
    let rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d2: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    (0..dim)
                        .map(|c| (x[i * dim + c] - x[j * dim + c]).powi(2))
                        .sum()
                })
                .collect();
            perplexity_calibrate(&d2, perplexity).map(|r| r.1)
        })
        .collect();
    let mut cond = Matrix::zeros(n, n);
    for (i, r) in rows.into_iter().enumerate() {
        let r = r?;
        let mut it = r.into_iter();
        for j in 0..n {
            if j != i {
                cond.set(i, j, it.next().unwrap());
            }
        }
    }
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            p.set(i, j, (cond.get(i, j) + cond.get(j, i)) / (2.0 * n as f64));
        }
    }
    Ok(p)
}

/// Sparse symmetric joint probabilities in compressed-row form (both
/// directions stored).
#[derive(Clone, Debug)]
pub struct SparseP {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseP {
    pub fn from_dense(p: &Matrix) -> Self {
        let n = p.rows;
        let mut row_ptr = vec![0];
        let (mut col, mut val) = (Vec::new(), Vec::new());
        for i in 0..n {
            for j in 0..n {
                let v = p.get(i, j);
                if i != j && v > 0.0 {
                    col.push(j);
                    val.push(v);
                }
            }
            row_ptr.push(col.len());
        }
        SparseP { n, row_ptr, col, val }
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col[k], self.val[k]))
    }
}

/// Joint probabilities restricted to the `floor(3 perplexity)` nearest
/// neighbors of each point, symmetrized by union.
pub fn sparse_joint_probabilities(x: &Tensor, perplexity: f64) -> Result<SparseP> {
    let n = x.rows();
    let k = ((3.0 * perplexity).floor() as usize).clamp(1, n - 1);
    let g = knn_graph(x, k)?;
    let rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d2: Vec<f64> = g.row(i).1.iter().map(|d| d * d).collect();
            perplexity_calibrate(&d2, perplexity.min(k as f64 - 1e-9).max(1.0)).map(|r| r.1)
        })
        .collect();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, r) in rows.into_iter().enumerate() {
        for (&j, p) in g.row(i).0.iter().zip(r?) {
            let v = p / (2.0 * n as f64);
            adj[i].push((j, v));
            adj[j].push((i, v));
        }
    }
    let mut row_ptr = vec![0];
    let (mut col, mut val) = (Vec::new(), Vec::new());
    for list in &mut adj {
        list.sort_by_key(|e| e.0);
        let mut k = 0;
        while k < list.len() {
            let j = list[k].0;
            let mut s = 0.0;
            while k < list.len() && list[k].0 == j {
                s += list[k].1;
                k += 1;
            }
            col.push(j);
            val.push(s);
        }
        row_ptr.push(col.len());
    }
    Ok(SparseP { n, row_ptr, col, val })
}

/// `KL(P || Q)` with `Q` the normalized Student-t kernel on `y`.
pub fn kl_divergence(p: &Matrix, y: &Matrix) -> f64 {
    let n = p.rows;
    let d2 = pairwise_sq(&y.data, n, y.cols);
    let z: f64 = (0..n * n)
        .filter(|k| k / n != k % n)
        .map(|k| 1.0 / (1.0 + d2[k]))
        .sum();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p.get(i, j);
            if i != j && pij > 0.0 {
                let q = 1.0 / (1.0 + d2[i * n + j]) / z;
                kl += pij * (pij / q).ln();
            }
        }
    }
    kl
}

/// `dKL/dy_i = 4 sum_j (p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|^2)`.
pub fn tsne_gradient_exact(p: &Matrix, y: &Matrix) -> Matrix {
    let (n, d) = (y.rows, y.cols);
    let d2 = pairwise_sq(&y.data, n, d);
    let w: Vec<f64> = d2.iter().map(|v| 1.0 / (1.0 + v)).collect();
    let z: f64 = (0..n * n).filter(|k| k / n != k % n).map(|k| w[k]).sum();
    let mut g = Matrix::zeros(n, d);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let wij = w[i * n + j];
            let m = 4.0 * (p.get(i, j) - wij / z) * wij;
            for c in 0..d {
                g.data[i * d + c] += m * (y.data[i * d + c] - y.data[j * d + c]);
            }
        }
    }
    g
}

fn bh_gradient_dim<const D: usize>(p: &SparseP, y: &[f64], theta: f64, exaggeration: f64) -> (Vec<f64>, f64) {
    let n = p.n;
    let tree = BhTree::<D>::build(y);
    let parts: Vec<([f64; D], [f64; D], f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rep = [0.0; D];
            let z = tree.repulsion(i, theta, &mut rep);
            let mut attr = [0.0; D];
            for (j, pij) in p.row(i) {
                let mut diff = [0.0; D];
                let mut d2 = 0.0;
                for c in 0..D {
                    diff[c] = y[i * D + c] - y[j * D + c];
                    d2 += diff[c] * diff[c];
                }
                let w = exaggeration * pij / (1.0 + d2);
                for c in 0..D {
                    attr[c] += w * diff[c];
                }
            }
            (attr, rep, z)
        })
        .collect();
    let z: f64 = parts.iter().map(|p| p.2).sum();
    let inv_z = if z > 0.0 { 1.0 / z } else { 0.0 };
    let mut g = vec![0.0; n * D];
    for (i, (attr, rep, _)) in parts.iter().enumerate() {
        for c in 0..D {
            g[i * D + c] = 4.0 * (attr[c] - rep[c] * inv_z);
        }
    }
    (g, z)
}

/// Barnes-Hut gradient: exact attraction over the sparse support of `P`,
/// tree-approximated repulsion. Returns the gradient and the estimate of
/// the normalizer `Z = sum_{i != j} (1 + |y_i - y_j|^2)^{-1}`.
pub fn tsne_gradient_bh(p: &SparseP, y: &Matrix, theta: f64) -> Result<(Matrix, f64)> {
    bh_gradient(p, y, theta, 1.0)
}

fn bh_gradient(p: &SparseP, y: &Matrix, theta: f64, exaggeration: f64) -> Result<(Matrix, f64)> {
    if !(theta >= 0.0) {
        return Err(Error::Parameter(format!("theta must be nonnegative, got {theta}")));
    }
    let (g, z) = match y.cols {
        2 => bh_gradient_dim::<2>(p, &y.data, theta, exaggeration),
        3 => bh_gradient_dim::<3>(p, &y.data, theta, exaggeration),
        d => {
            return Err(Error::Parameter(format!(
                "Barnes-Hut needs 2 or 3 output dimensions, got {d}"
            )))
        }
    };
    Ok((Matrix::from_vec(y.rows, y.cols, g), z))
}

fn sparse_kl(p: &SparseP, y: &Matrix, z: f64) -> f64 {
    let d = y.cols;
    let mut kl = 0.0;
    for i in 0..p.n {
        for (j, pij) in p.row(i) {
            if pij > 0.0 {
                let d2: f64 = (0..d).map(|c| (y.data[i * d + c] - y.data[j * d + c]).powi(2)).sum();
                let q = 1.0 / (1.0 + d2) / z;
                kl += pij * (pij / q).ln();
            }
        }
    }
    kl
}

#[derive(Clone, Debug)]
pub struct TsneConfig {
    pub dim: usize,
    pub perplexity: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum_early: f64,
    pub momentum_late: f64,
    /// Barnes-Hut opening angle; 0 selects the exact O(n^2) gradient.
    pub theta: f64,
    /// Project inputs onto this many principal components first.
    pub pca_dims: Option<usize>,
    /// KL is recorded every `kl_every` iterations and at the last one.
    pub kl_every: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            dim: 2,
            perplexity: 30.0,
            learning_rate: 200.0,
            iterations: 1000,
            seed: 0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum_early: 0.5,
            momentum_late: 0.8,
            theta: 0.5,
            pca_dims: None,
            kl_every: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TsneResult {
    pub embedding: Embedding,
    /// `(iteration, KL(P || Q))`, KL taken against the unexaggerated `P`.
    pub kl_history: Vec<(usize, f64)>,
}

fn pca_project(x: &[f64], n: usize, dim: usize, k: usize) -> Result<Vec<f64>> {
    let k = k.min(dim);
    let mut mean = vec![0.0; dim];
    for i in 0..n {
        for c in 0..dim {
            mean[c] += x[i * dim + c] / n as f64;
        }
    }
    let mut cov = Matrix::zeros(dim, dim);
    for i in 0..n {
        let r: Vec<f64> = (0..dim).map(|c| x[i * dim + c] - mean[c]).collect();
        for a in 0..dim {
            for b in a..dim {
                cov.data[a * dim + b] += r[a] * r[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            cov.data[a * dim + b] = cov.data[b * dim + a];
        }
    }
    let eig = sym_eigen(&cov, Which::Largest, k)?;
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        for j in 0..k {
            let col = k - 1 - j;
            out[i * k + j] = (0..dim)
                .map(|c| (x[i * dim + c] - mean[c]) * eig.vectors.get(c, col))
                .sum();
        }
    }
    Ok(out)
}

/// t-SNE by gradient descent with momentum and per-coordinate adaptive
/// gains, early exaggeration of `P`, and a small Gaussian initialization
/// (variance 1e-4).
pub fn tsne_embed(x: &Tensor, cfg: &TsneConfig) -> Result<TsneResult> {
    let (n, dim_in, mut xs) = rows_f64(x)?;
    if n < 5 {
        return Err(Error::Parameter(format!("t-SNE needs at least 5 points, got {n}")));
    }
    if cfg.dim == 0 {
        return Err(Error::Parameter("output dimension must be positive".into()));
    }
    let mut dim = dim_in;
    if let Some(k) = cfg.pca_dims {
        xs = pca_project(&xs, n, dim_in, k)?;
        dim = k.min(dim_in);
    }
    let exact = cfg.theta == 0.0 || cfg.dim > 3;
    let (dense_p, sparse_p) = if exact {
        (Some(joint_probabilities(&xs, n, dim, cfg.perplexity)?), None)
    } else {
        let xt = Tensor::matrix_from_f64(n, dim, &xs)?;
        (None, Some(sparse_joint_probabilities(&xt, cfg.perplexity)?))
    };
    let d = cfg.dim;
    let mut rng = seeded(cfg.seed);
    let init = Normal::new(0.0, 1e-2).expect("valid normal");
    let mut y = Matrix::from_vec(n, d, (0..n * d).map(|_| init.sample(&mut rng)).collect());
    let mut update = vec![0.0f64; n * d];
    let mut gains = vec![1.0f64; n * d];
    let mut history = Vec::new();
    for it in 0..cfg.iterations {
        let early = it < cfg.exaggeration_iters;
        let exag = if early { cfg.exaggeration } else { 1.0 };
        let momentum = if early { cfg.momentum_early } else { cfg.momentum_late };
        let record = it % cfg.kl_every.max(1) == 0 || it + 1 == cfg.iterations;
        let (grad, kl) = if let Some(p) = &dense_p {
            let g = if exag == 1.0 {
                tsne_gradient_exact(p, &y)
            } else {
                let mut pe = p.clone();
                pe.data.iter_mut().for_each(|v| *v *= exag);
                tsne_gradient_exact(&pe, &y)
            };
            (g, record.then(|| kl_divergence(p, &y)))
        } else {
            let p = sparse_p.as_ref().unwrap();
            let (g, z) = bh_gradient(p, &y, cfg.theta, exag)?;
            (g, record.then(|| sparse_kl(p, &y, z)))
        };
        if grad.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Optimization { iteration: it });
        }
        for k in 0..n * d {
            let g = grad.data[k];
            gains[k] = if (g > 0.0) != (update[k] > 0.0) {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(0.01)
            };
            update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * g;
            y.data[k] += update[k];
        }
        for c in 0..d {
            let mean = (0..n).map(|i| y.data[i * d + c]).sum::<f64>() / n as f64;
            for i in 0..n {
                y.data[i * d + c] -= mean;
            }
        }
        if let Some(kl) = kl {
            if !kl.is_finite() {
                return Err(Error::Optimization { iteration: it });
            }
            history.push((it, kl));
        }
    }
    let final_kl = history.last().map(|h| h.1).unwrap_or(f64::NAN);
    let mut hp = hyper(&[
        ("d", d as f64),
        ("perplexity", cfg.perplexity),
        ("learning_rate", cfg.learning_rate),
        ("iterations", cfg.iterations as f64),
        ("exaggeration", cfg.exaggeration),
        ("exaggeration_iters", cfg.exaggeration_iters as f64),
        ("theta", cfg.theta),
        ("seed", cfg.seed as f64),
    ]);
    if let Some(k) = cfg.pca_dims {
        hp.insert("pca_dims".into(), k as f64);
    }
    Ok(TsneResult {
        embedding: Embedding {
            method: Method::Tsne,
            coords: y.to_tensor()?,
            hyper: hp,
            standardization: None,
            diagnostics: hyper(&[("final_kl", final_kl)]),
        },
        kl_history: history,
    })
}
