//! Neighborhood graphs and the graph primitives shared by the embedders:
//! exact k-NN, Gaussian affinities, the unnormalized Laplacian and all-pairs
//! geodesic distances.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Exact k-nearest-neighbor graph. Row `i` of `neighbors`/`distances` holds
/// the `k` nearest other points, closest first, ties broken by lower index.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborGraph {
    pub n: usize,
    pub k: usize,
    pub neighbors: Vec<usize>,
    pub distances: Vec<f64>,
}

impl NeighborGraph {
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        (
            &self.neighbors[i * self.k..(i + 1) * self.k],
            &self.distances[i * self.k..(i + 1) * self.k],
        )
    }

    /// Union-symmetrized adjacency lists (edge if `i -> j` or `j -> i`),
    /// each sorted by neighbor index.
    pub fn symmetric_adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n];
        for i in 0..self.n {
            let (nb, d) = self.row(i);
            for (&j, &dist) in nb.iter().zip(d) {
                adj[i].push((j, dist));
                adj[j].push((i, dist));
            }
        }
        for list in &mut adj {
            list.sort_by_key(|e| e.0);
            list.dedup_by_key(|e| e.0);
        }
        adj
    }

    /// Sizes of the connected components of the symmetrized graph, largest
    /// first.
    pub fn component_sizes(&self) -> Vec<usize> {
        component_sizes(&self.symmetric_adjacency())
    }

    pub fn ensure_connected(&self) -> Result<()> {
        let sizes = self.component_sizes();
        if sizes.len() > 1 {
            return Err(Error::Connectivity { sizes });
        }
        Ok(())
    }

    /// Median of all k-NN edge lengths; a data-scaled kernel bandwidth.
    pub fn median_distance(&self) -> f64 {
        let mut d = self.distances.clone();
        if d.is_empty() {
            return 0.0;
        }
        d.sort_by(f64::total_cmp);
        d[d.len() / 2]
    }
}

fn component_sizes(adj: &[Vec<(usize, f64)>]) -> Vec<usize> {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        stack.push(s);
        let mut size = 0;
        while let Some(u) = stack.pop() {
            size += 1;
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

pub(crate) fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

fn by_dist_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Brute-force exact k-NN over the rows of `x` (`[n, d]`).
pub fn knn_graph(x: &Tensor, k: usize) -> Result<NeighborGraph> {
    let n = x.rows();
    if x.rank() != 2 {
        return Err(Error::shape("knn_graph", format!("expected [n, d], got {:?}", x.shape())));
    }
    if k == 0 || k >= n {
        return Err(Error::Parameter(format!("k must satisfy 1 <= k < n, got k={k}, n={n}")));
    }
    let rows: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(xi, x.row(j)), j))
                .collect();
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, by_dist_then_index);
                cand.truncate(k);
            }
            cand.sort_by(by_dist_then_index);
            cand
        })
        .collect();
    let mut neighbors = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    for row in rows {
        for (d2, j) in row {
            neighbors.push(j);
            distances.push(d2.sqrt());
        }
    }
    Ok(NeighborGraph {
        n,
        k,
        neighbors,
        distances,
    })
}

/// Symmetric sparse matrix holding the upper triangle (`row <= col`),
/// sorted and duplicate-free.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymMatrix {
    pub n: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSymMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let key = (i.min(j), i.max(j));
        self.entries
            .binary_search_by(|e| (e.0, e.1).cmp(&key))
            .map(|p| self.entries[p].2)
            .unwrap_or(0.0)
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut m = vec![0.0; n * n];
        for &(i, j, v) in &self.entries {
            m[i * n + j] = v;
            m[j * n + i] = v;
        }
        m
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for &(i, j, v) in &self.entries {
            s[i] += v;
            if i != j {
                s[j] += v;
            }
        }
        s
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(i, j, v) in &self.entries {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }
}

/// Gaussian kernel `exp(-d^2 / (2 sigma^2))` on every edge of the
/// union-symmetrized graph.
pub fn gaussian_affinity(g: &NeighborGraph, sigma: f64) -> Result<SparseSymMatrix> {
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    let adj = g.symmetric_adjacency();
    let mut entries = Vec::new();
    for (i, list) in adj.iter().enumerate() {
        for &(j, d) in list {
            if i < j {
                entries.push((i, j, (-(d * d) / (2.0 * sigma * sigma)).exp()));
            }
        }
    }
    Ok(SparseSymMatrix { n: g.n, entries })
}

#[derive(Clone, Debug)]
pub struct Laplacian {
    /// `L = D - W`.
    pub l: SparseSymMatrix,
    pub degree: Vec<f64>,
    /// Nodes with zero degree.
    pub isolated: Vec<usize>,
}

pub fn graph_laplacian(w: &SparseSymMatrix) -> Result<Laplacian> {
    if let Some(&(i, j, v)) = w.entries.iter().find(|e| !(e.2 >= 0.0) || !e.2.is_finite()) {
        return Err(Error::Parameter(format!("affinity ({i}, {j}) = {v} is not a finite nonnegative value")));
    }
    let degree = w.row_sums();
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(w.entries.len() + w.n);
    let mut diag = degree.clone();
    for &(i, j, v) in &w.entries {
        if i == j {
            diag[i] -= v;
        } else {
            entries.push((i, j, -v));
        }
    }
    for (i, &d) in diag.iter().enumerate() {
        entries.push((i, i, d));
    }
    entries.sort_by_key(|e| (e.0, e.1));
    let isolated = degree
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 0.0)
        .map(|(i, _)| i)
        .collect();
    Ok(Laplacian {
        l: SparseSymMatrix { n: w.n, entries },
        degree,
        isolated,
    })
}

/// Dense symmetric distance matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    pub n: usize,
    pub d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    /// Elementwise squares, row-major.
    pub fn squared(&self) -> Vec<f64> {
        self.d.iter().map(|v| v * v).collect()
    }
}

#[derive(PartialEq)]
struct Frontier(f64, usize);

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then index
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(adj: &[Vec<(usize, f64)>], src: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Frontier(0.0, src));
    while let Some(Frontier(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Frontier(nd, v));
            }
        }
    }
    dist
}

/// Shortest-path distances on the union-symmetrized k-NN graph, with
/// Euclidean edge weights, by Dijkstra from every source.
pub fn all_pairs_geodesic(g: &NeighborGraph) -> Result<DistanceMatrix> {
    let adj = g.symmetric_adjacency();
    let sizes = component_sizes(&adj);
    if sizes.len() > 1 {
        return Err(Error::Connectivity { sizes });
    }
    let n = g.n;
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| dijkstra(&adj, s)).collect();
    let mut d = Vec::with_capacity(n * n);
    for r in rows {
        d.extend(r);
    }
    // Path sums can differ in the last bit between directions.
    for i in 0..n {
        for j in i + 1..n {
            let m = d[i * n + j].min(d[j * n + i]);
            d[i * n + j] = m;
            d[j * n + i] = m;
        }
    }
    Ok(DistanceMatrix { n, d })
}
