//! The four embedders (LLE, Isomap, Laplacian Eigenmaps, t-SNE) and the
//! [`Embedding`] they produce.

mod bhtree;
mod isomap;
mod laplacian;
mod lle;
mod tsne;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{load_tensor, save_tensor, Tensor};

pub use isomap::{isomap_embed, residual_variance};
pub use laplacian::{le_default_sigma, le_embed};
pub use lle::{lle_embed, lle_weights, LleWeights};
pub use tsne::{
    joint_probabilities, kl_divergence, perplexity_calibrate, sparse_joint_probabilities,
    tsne_embed, tsne_gradient_bh, tsne_gradient_exact, SparseP, TsneConfig, TsneResult,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lle,
    Isomap,
    Le,
    Tsne,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Lle, Method::Isomap, Method::Le, Method::Tsne];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lle => "lle",
            Method::Isomap => "isomap",
            Method::Le => "le",
            Method::Tsne => "tsne",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lle" => Ok(Method::Lle),
            "isomap" => Ok(Method::Isomap),
            "le" | "laplacian" | "laplacian-eigenmaps" => Ok(Method::Le),
            "tsne" | "t-sne" => Ok(Method::Tsne),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Per-dimension affine statistics: `coords = standardized * sd + mean`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimStats {
    pub mean: f64,
    pub sd: f64,
}

/// Low-dimensional coordinates plus how they were produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub method: Method,
    /// `[n, d]`.
    pub coords: Tensor,
    pub hyper: BTreeMap<String, f64>,
    /// Present when `coords` are standardized; maps back to the raw embedding.
    pub standardization: Option<Vec<DimStats>>,
    /// Method-specific scalars (final KL, residual variance, ...).
    pub diagnostics: BTreeMap<String, f64>,
}

impl Embedding {
    pub fn n(&self) -> usize {
        self.coords.rows()
    }

    pub fn dim(&self) -> usize {
        self.coords.row_len()
    }
}

pub(crate) fn hyper(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Per-dimension zero mean, unit (population) variance. Statistics compose
/// with any existing standardization so they always map back to the raw
/// embedding.
pub fn standardize_embedding(e: &Embedding) -> Result<Embedding> {
    let (n, d) = (e.n(), e.dim());
    if n < 2 {
        return Err(Error::Parameter("standardization needs at least two rows".into()));
    }
    let x = e.coords.to_f64();
    let mut stats = Vec::with_capacity(d);
    for j in 0..d {
        let mean = (0..n).map(|i| x[i * d + j]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (x[i * d + j] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::DegenerateDimension { dim: j });
        }
        stats.push(DimStats { mean, sd });
    }
    let out: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(k, &v)| (v - stats[k % d].mean) / stats[k % d].sd)
        .collect();
    let composed = match &e.standardization {
        None => stats,
        Some(prev) => prev
            .iter()
            .zip(&stats)
            .map(|(p, s)| DimStats {
                mean: p.mean + p.sd * s.mean,
                sd: p.sd * s.sd,
            })
            .collect(),
    };
    Ok(Embedding {
        coords: Tensor::matrix_from_f64(n, d, &out)?,
        standardization: Some(composed),
        ..e.clone()
    })
}

/// Maps standardized coordinates (any row count) back to raw embedding
/// space.
pub fn destandardize_coords(coords: &Tensor, stats: &[DimStats]) -> Result<Tensor> {
    let d = stats.len();
    if coords.rank() != 2 || coords.row_len() != d {
        return Err(Error::shape(
            "destandardize",
            format!("coords {:?} vs {} stats", coords.shape(), d),
        ));
    }
    let out: Vec<f64> = coords
        .data()
        .iter()
        .enumerate()
        .map(|(k, &v)| v as f64 * stats[k % d].sd + stats[k % d].mean)
        .collect();
    Tensor::matrix_from_f64(coords.rows(), d, &out)
}

pub fn destandardize_embedding(e: &Embedding) -> Result<Embedding> {
    match &e.standardization {
        None => Ok(e.clone()),
        Some(stats) => Ok(Embedding {
            coords: destandardize_coords(&e.coords, stats)?,
            standardization: None,
            ..e.clone()
        }),
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    method: Method,
    n: usize,
    d: usize,
    hyper: BTreeMap<String, f64>,
    standardization: Option<Vec<DimStats>>,
    diagnostics: BTreeMap<String, f64>,
}

/// Writes `coords` as MGT1 and the metadata as a JSON sidecar.
pub fn save_embedding(e: &Embedding, coords_path: &Path, sidecar_path: &Path) -> Result<()> {
    save_tensor(&e.coords, coords_path)?;
    let side = Sidecar {
        method: e.method,
        n: e.n(),
        d: e.dim(),
        hyper: e.hyper.clone(),
        standardization: e.standardization.clone(),
        diagnostics: e.diagnostics.clone(),
    };
    let json = serde_json::to_string_pretty(&side).expect("sidecar serializes");
    fs::write(sidecar_path, json).map_err(|err| Error::io(sidecar_path, err))
}

pub fn load_embedding(coords_path: &Path, sidecar_path: &Path) -> Result<Embedding> {
    let coords = load_tensor(coords_path)?;
    let text = fs::read_to_string(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
    let side: Sidecar = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", sidecar_path.display())))?;
    if coords.rank() != 2 || coords.rows() != side.n || coords.row_len() != side.d {
        return Err(Error::Format(format!(
            "{}: sidecar declares {}x{} but coords are {:?}",
            sidecar_path.display(),
            side.n,
            side.d,
            coords.shape()
        )));
    }
    Ok(Embedding {
        method: side.method,
        coords,
        hyper: side.hyper,
        standardization: side.standardization,
        diagnostics: side.diagnostics,
    })
}

/// Row-major f64 copy of a `[n, d]` tensor.
pub(crate) fn rows_f64(x: &Tensor) -> Result<(usize, usize, Vec<f64>)> {
    if x.rank() != 2 {
        return Err(Error::shape("embedder input", format!("expected [n, d], got {:?}", x.shape())));
    }
    Ok((x.rows(), x.row_len(), x.to_f64()))
}
