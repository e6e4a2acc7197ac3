use super::{hyper, Embedding, Method};
use crate::error::{Error, Result};
use crate::graph::{all_pairs_geodesic, knn_graph, DistanceMatrix};
use crate::spectral::{double_center, sym_eigen, Matrix, Which};
use crate::tensor::Tensor;

/// `1 - r^2` between geodesic and embedded pairwise distances over all
/// unordered pairs.
pub fn residual_variance(geo: &DistanceMatrix, coords: &[f64], d: usize) -> f64 {
    let n = geo.n;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let x = geo.get(i, j);
            let y = (0..d)
                .map(|c| (coords[i * d + c] - coords[j * d + c]).powi(2))
                .sum::<f64>()
                .sqrt();
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
            m += 1.0;
        }
    }
    let cov = sxy / m - (sx / m) * (sy / m);
    let vx = sxx / m - (sx / m).powi(2);
    let vy = syy / m - (sy / m).powi(2);
    if vx <= 0.0 || vy <= 0.0 {
        return 1.0;
    }
    1.0 - cov * cov / (vx * vy)
}

/// Isomap: geodesic distances on the k-NN graph, classical MDS on their
/// squares. Coordinates are ordered by decreasing eigenvalue; negative
/// eigenvalues are clipped to zero and the clipped mass is reported.
pub fn isomap_embed(x: &Tensor, k: usize, d: usize) -> Result<Embedding> {
    let n = x.rows();
    if d == 0 || d >= n {
        return Err(Error::Parameter(format!("need 1 <= d < n, got d={d}, n={n}")));
    }
    let g = knn_graph(x, k)?;
    let geo = all_pairs_geodesic(&g)?;
    let b = double_center(&Matrix::from_vec(n, n, geo.squared()))?;
    let eig = sym_eigen(&b, Which::Largest, d)?;
    let mut coords = vec![0.0; n * d];
    let mut clipped = 0.0;
    for c in 0..d {
        let col = d - 1 - c;
        let lambda = eig.values[col];
        if lambda < 0.0 {
            clipped += -lambda;
        }
        let s = lambda.max(0.0).sqrt();
        for i in 0..n {
            coords[i * d + c] = eig.vectors.get(i, col) * s;
        }
    }
    let rv = residual_variance(&geo, &coords, d);
    Ok(Embedding {
        method: Method::Isomap,
        coords: Tensor::matrix_from_f64(n, d, &coords)?,
        hyper: hyper(&[("k", k as f64), ("d", d as f64)]),
        standardization: None,
        diagnostics: hyper(&[("residual_variance", rv), ("clipped_eigenvalue_mass", clipped)]),
    })
}
