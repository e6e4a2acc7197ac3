use super::{hyper, Embedding, Method};
use crate::error::{Error, Result};
use crate::graph::{gaussian_affinity, graph_laplacian, knn_graph};
use crate::spectral::{generalized_sym_eigen, Matrix};
use crate::tensor::Tensor;

/// Heat-kernel width used when none is given: the median k-NN distance.
pub fn le_default_sigma(x: &Tensor, k: usize) -> Result<f64> {
    let s = knn_graph(x, k)?.median_distance();
    if !(s > 0.0) {
        return Err(Error::Data("all k-NN distances are zero; cannot pick a kernel width".into()));
    }
    Ok(s)
}

/// Laplacian Eigenmaps: eigenvectors `1..=d` of `L v = lambda D v` on the
/// Gaussian-weighted k-NN graph. The returned coordinates are
/// `D`-orthonormal.
pub fn le_embed(x: &Tensor, k: usize, sigma: f64, d: usize) -> Result<Embedding> {
    let n = x.rows();
    if d == 0 || d + 1 > n {
        return Err(Error::Parameter(format!("need 1 <= d < n, got d={d}, n={n}")));
    }
    let g = knn_graph(x, k)?;
    g.ensure_connected()?;
    let w = gaussian_affinity(&g, sigma)?;
    let lap = graph_laplacian(&w)?;
    if !lap.isolated.is_empty() {
        // every kernel weight underflowed for these nodes
        let isolated = lap.isolated.len();
        return Err(Error::Connectivity {
            sizes: std::iter::once(n - isolated)
                .chain(std::iter::repeat(1).take(isolated))
                .collect(),
        });
    }
    let l = Matrix::from_vec(n, n, lap.l.to_dense());
    let eig = generalized_sym_eigen(&l, &lap.degree, d + 1)?;
    let mut coords = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..d {
            coords[i * d + j] = eig.vectors.get(i, j + 1);
        }
    }
    Ok(Embedding {
        method: Method::Le,
        coords: Tensor::matrix_from_f64(n, d, &coords)?,
        hyper: hyper(&[("k", k as f64), ("sigma", sigma), ("d", d as f64)]),
        standardization: None,
        diagnostics: hyper(&[
            ("null_eigenvalue", eig.values[0]),
            ("fiedler_eigenvalue", eig.values[1]),
        ]),
    })
}
