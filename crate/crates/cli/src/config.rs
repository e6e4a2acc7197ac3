//! JSON pipeline configuration. Every field has a default, so `{}` is a
//! valid config; command-line flags are applied on top.

use std::path::{Path, PathBuf};

use manigen_core::diffusion::{DiffusionConfig, ScheduleParams};
use manigen_core::nldr::Method;
use manigen_core::recon::{AutoencoderArch, DecoderArch, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub preprocessing: Preprocessing,
    pub method: MethodConfig,
    pub decoder: DecoderConfig,
    pub autoencoder: AutoencoderConfig,
    pub diffusion: DiffusionStage,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            output_dir: PathBuf::from("mg-out"),
            dataset: DatasetConfig::default(),
            preprocessing: Preprocessing::default(),
            method: MethodConfig::default(),
            decoder: DecoderConfig::default(),
            autoencoder: AutoencoderConfig::default(),
            diffusion: DiffusionStage::default(),
        }
    }
}

/// Either a file (`.mgt` tensor, `.pgm`/`.ppm` image, or a directory of
/// them) or a synthetic generator.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    Spots,
    SwissRoll,
    Blobs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    /// Image side for `spots`.
    pub size: usize,
    /// Noise sd for `swiss_roll`, cluster sd for `blobs`.
    pub noise: f64,
    /// Number of clusters and ambient dimension for `blobs`.
    pub clusters: usize,
    pub dim: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec { kind: SyntheticKind::Spots, n: 2000, size: 28, noise: 0.0, clusters: 3, dim: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocessing {
    pub height: Option<usize>,
    pub width: Option<usize>,
    pub channels: Option<usize>,
    /// Value range that raw `.mgt` image tensors are stored in.
    pub range: (f32, f32),
}

impl Default for Preprocessing {
    fn default() -> Self {
        Preprocessing { height: None, width: None, channels: None, range: (-1.0, 1.0) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodConfig {
    pub name: Method,
    /// Neighbors; defaults to 50 for LLE and Isomap, 15 for LE.
    pub k: Option<usize>,
    /// Output dimension; defaults to 256 for LLE and Isomap, 50 for LE,
    /// 3 for t-SNE.
    pub dim: Option<usize>,
    pub lle_reg: f64,
    /// Heat-kernel width for LE; median k-NN distance when absent.
    pub sigma: Option<f64>,
    pub perplexity: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub theta: f64,
    pub pca_dims: Option<usize>,
}

impl Default for MethodConfig {
    fn default() -> Self {
        MethodConfig {
            name: Method::Isomap,
            k: None,
            dim: None,
            lle_reg: 1e-3,
            sigma: None,
            perplexity: 30.0,
            learning_rate: 200.0,
            iterations: 1000,
            theta: 0.5,
            pca_dims: None,
        }
    }
}

impl MethodConfig {
    pub fn neighbors(&self) -> usize {
        self.k.unwrap_or(match self.name {
            Method::Lle | Method::Isomap => 50,
            Method::Le => 15,
            Method::Tsne => 0,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.dim.unwrap_or(match self.name {
            Method::Lle | Method::Isomap => 256,
            Method::Le => 50,
            Method::Tsne => 3,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub arch: DecoderArch,
    pub train: TrainConfig,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig { arch: DecoderArch::PaperConv, train: TrainConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderConfig {
    pub arch: AutoencoderArch,
    pub latent_dim: usize,
    pub train: TrainConfig,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            arch: AutoencoderArch::Conv,
            latent_dim: 50,
            train: TrainConfig { coord_dropout_p: 0.0, ..TrainConfig::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionStage {
    pub schedule: ScheduleParams,
    pub train: DiffusionConfig,
    pub n_samples: usize,
}

impl Default for DiffusionStage {
    fn default() -> Self {
        DiffusionStage { schedule: ScheduleParams::default(), train: DiffusionConfig::default(), n_samples: 64 }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        if !path.is_file() {
            return Err(CliError::format(format!("config file {} does not exist", path.display())));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    /// SHA-256 of the serialized config, for the manifest. The output
    /// directory is left out: it decides where artifacts go, not what
    /// they contain.
    pub fn hash(&self) -> String {
        let content = PipelineConfig { output_dir: PathBuf::new(), ..self.clone() };
        let text = serde_json::to_string(&content).expect("config serializes");
        format!("{:x}", Sha256::digest(text.as_bytes()))
    }
}
