//! Command-line pipeline: datasets, embeddings, decoders, the autoencoder
//! baseline, embedding-space diffusion and evaluation, each stage reading
//! and writing files in one output directory.

pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use manigen_core::diffusion::{
    generate_images, train_diffusion, Denoiser, DenoiserSpec, NoiseSchedule, SampleRun,
};
use manigen_core::image::{
    flatten_images, read_pnm, resize_bilinear, stack_images, tile_grid, write_pnm, ImageBatch,
};
use manigen_core::nldr::{
    destandardize_embedding, isomap_embed, le_default_sigma, le_embed, lle_embed, load_embedding,
    save_embedding, standardize_embedding, tsne_embed, Embedding, Method, TsneConfig,
};
use manigen_core::nn::{load_checkpoint, save_checkpoint};
use manigen_core::recon::{train_autoencoder, train_decoder, Decoder, ReconReport};
use manigen_core::rng::derive_seed;
use manigen_core::synthetic::{make_blobs, make_spot_images, make_swiss_roll};
use manigen_core::tensor::{load_tensor, save_tensor};
use manigen_core::Tensor;
use serde::Serialize;
use serde_json::{json, Value};

pub use config::PipelineConfig;
use config::{SyntheticKind, SyntheticSpec};
use manifest::{unix_now, RunManifest};

/// A failed command: machine-readable kind, message and process exit code.
#[derive(Clone, Debug, PartialEq)]
pub struct CliError {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    fn new(kind: &str, message: impl Into<String>, exit_code: i32) -> Self {
        CliError { kind: kind.into(), message: message.into(), exit_code }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("ConfigError", message, 2)
    }

    pub fn format(message: impl Into<String>) -> Self {
        Self::new("FormatError", message, 2)
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("IoError", format!("{}: {e}", path.display()), 2)
    }

    /// The single-line JSON object printed on stderr.
    pub fn to_json(&self) -> String {
        json!({ "error": self.kind, "message": self.message, "exit_code": self.exit_code }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<manigen_core::Error> for CliError {
    fn from(e: manigen_core::Error) -> Self {
        use manigen_core::Error as E;
        // bad inputs and settings are usage errors; the rest are numerical
        let code = match e {
            E::Io { .. }
            | E::Format(_)
            | E::Config(_)
            | E::Parameter(_)
            | E::Shape { .. }
            | E::Alignment(_)
            | E::Data(_) => 2,
            _ => 1,
        };
        CliError::new(e.kind(), e.to_string(), code)
    }
}

type Res<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "manigen", version, about = "Manifold embeddings, decoders and embedding-space diffusion")]
struct Cli {
    /// JSON pipeline config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; every stage derives its own seed from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long = "out-dir", global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset as an MGT1 tensor.
    MakeDataset {
        #[arg(long, value_enum)]
        kind: Option<SyntheticKind>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Run an NLDR method and write coordinates plus a JSON sidecar.
    Embed {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        perplexity: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Train a decoder from an embedding back to its images.
    TrainDecoder {
        #[arg(long)]
        embedding: Option<PathBuf>,
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        arch: Option<manigen_core::recon::DecoderArch>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Train the autoencoder baseline on the images.
    TrainAe {
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        arch: Option<manigen_core::recon::AutoencoderArch>,
        #[arg(long = "latent-dim")]
        latent_dim: Option<usize>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Train the noise predictor on standardized embedding coordinates.
    TrainDiffusion {
        #[arg(long)]
        embedding: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long = "batch-size")]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Sample coordinates, decode them and write a grid.
    Sample {
        #[arg(long)]
        embedding: Option<PathBuf>,
        #[arg(long)]
        denoiser: Option<PathBuf>,
        #[arg(long)]
        decoder: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Tabulate reconstruction reports by validation MSE.
    Evaluate {
        #[arg(long = "report", required = true)]
        reports: Vec<PathBuf>,
    },
}

#[derive(clap::Args, Debug)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long = "coord-dropout")]
    coord_dropout: Option<f64>,
}

impl TrainFlags {
    fn apply(&self, t: &mut manigen_core::recon::TrainConfig) {
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.lr {
            t.lr = v;
        }
        if let Some(v) = self.coord_dropout {
            t.coord_dropout_p = v;
        }
    }
}

pub const DATASET_FILE: &str = "dataset.mgt";
pub const EMBEDDING_FILE: &str = "embedding.mgt";
pub const DECODER_FILE: &str = "decoder.ckpt";
pub const DENOISER_FILE: &str = "denoiser.ckpt";

/// Sets the rayon pool size from `MG_THREADS` when present.
fn configure_threads() -> Res<()> {
    if let Ok(v) = std::env::var("MG_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::config(format!("MG_THREADS must be a positive integer, got {v:?}")))?;
        // a pool set up earlier in this process stays in place
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command. Returns the
/// summary printed on stdout.
pub fn run<I, T>(args: I) -> Res<Value>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::new("UsageError", e.to_string().trim(), 2))?;
    configure_threads()?;
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.output_dir = d.clone();
    }
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::io(&cfg.output_dir, e))?;
    match cli.command {
        Command::MakeDataset { kind, n, size, noise } => {
            let spec = cfg.dataset.synthetic.get_or_insert_with(SyntheticSpec::default);
            if let Some(v) = kind {
                spec.kind = v;
            }
            if let Some(v) = n {
                spec.n = v;
            }
            if let Some(v) = size {
                spec.size = v;
            }
            if let Some(v) = noise {
                spec.noise = v;
            }
            cmd_make_dataset(&cfg)
        }
        Command::Embed { input, method, k, dim, perplexity, sigma, iterations, theta } => {
            let m = &mut cfg.method;
            if let Some(v) = method {
                if v != m.name {
                    m.k = None;
                    m.dim = None;
                }
                m.name = v;
            }
            m.k = k.or(m.k);
            m.sigma = sigma.or(m.sigma);
            m.dim = dim.or(m.dim);
            if let Some(v) = perplexity {
                m.perplexity = v;
            }
            if let Some(v) = iterations {
                m.iterations = v;
            }
            if let Some(v) = theta {
                m.theta = v;
            }
            cmd_embed(&cfg, input.as_deref())
        }
        Command::TrainDecoder { embedding, images, arch, train } => {
            if let Some(a) = arch {
                cfg.decoder.arch = a;
            }
            train.apply(&mut cfg.decoder.train);
            cmd_train_decoder(&cfg, embedding.as_deref(), images.as_deref())
        }
        Command::TrainAe { images, arch, latent_dim, train } => {
            if let Some(a) = arch {
                cfg.autoencoder.arch = a;
            }
            if let Some(l) = latent_dim {
                cfg.autoencoder.latent_dim = l;
            }
            train.apply(&mut cfg.autoencoder.train);
            cmd_train_ae(&cfg, images.as_deref())
        }
        Command::TrainDiffusion { embedding, epochs, batch_size, lr } => {
            let t = &mut cfg.diffusion.train;
            if let Some(v) = epochs {
                t.epochs = v;
            }
            if let Some(v) = batch_size {
                t.batch_size = v;
            }
            if let Some(v) = lr {
                t.lr = v;
            }
            cmd_train_diffusion(&cfg, embedding.as_deref())
        }
        Command::Sample { embedding, denoiser, decoder, n } => {
            if let Some(v) = n {
                cfg.diffusion.n_samples = v;
            }
            cmd_sample(&cfg, embedding.as_deref(), denoiser.as_deref(), decoder.as_deref())
        }
        Command::Evaluate { reports } => cmd_evaluate(&cfg, &reports),
    }
}

/// Entry point for the binary: runs, prints, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    // help and version go to stdout with status 0
    if let Err(e) = Cli::try_parse_from(&args) {
        if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
            emit(&e.to_string());
            return 0;
        }
    }
    match run(args) {
        Ok(summary) => {
            match summary.as_str() {
                Some(text) => emit(text),
                None => emit(&format!("{summary}\n")),
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code
        }
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn require_file(p: &Path) -> Res<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(CliError::format(format!("input {} does not exist", p.display())))
    }
}

fn write_json(path: &Path, v: &impl Serialize) -> Res<()> {
    let text = serde_json::to_string_pretty(v).expect("value serializes");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn sidecar_path(coords: &Path) -> PathBuf {
    coords.with_extension("json")
}

/// A loaded dataset: images, or a plain point cloud.
#[derive(Clone, Debug)]
pub enum Dataset {
    Images(ImageBatch),
    Points(Tensor),
}

impl Dataset {
    /// Rows fed to an embedder: flattened images or the points themselves.
    pub fn rows(&self) -> Tensor {
        match self {
            Dataset::Images(b) => flatten_images(b),
            Dataset::Points(t) => t.clone(),
        }
    }
}

fn is_pnm(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()), Some("pgm" | "ppm"))
}

/// Affine map of a batch from its value range onto `[-1, 1]`.
fn to_signed(b: &ImageBatch) -> Res<ImageBatch> {
    let v: Vec<f64> = b.unit_range_f64().iter().map(|u| 2.0 * u - 1.0).collect();
    let t = Tensor::from_f64(b.pixels.shape().to_vec(), &v)?;
    let clamped = Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| x.clamp(-1.0, 1.0)).collect())?;
    Ok(ImageBatch::new(clamped, (-1.0, 1.0))?)
}

fn preprocess(mut b: ImageBatch, cfg: &PipelineConfig) -> Res<ImageBatch> {
    let p = &cfg.preprocessing;
    if let Some(c) = p.channels {
        if c != b.channels {
            return Err(CliError::config(format!("images have {} channels, config expects {c}", b.channels)));
        }
    }
    let h = p.height.unwrap_or(b.height);
    let w = p.width.unwrap_or(b.width);
    if (h, w) != (b.height, b.width) {
        b = resize_bilinear(&b, h, w)?;
    }
    to_signed(&b)
}

/// Loads `path` (tensor, image, or directory of images) or the configured
/// dataset, in that order, falling back to `dataset.mgt` in the output
/// directory. Images come back in `[-1, 1]`.
pub fn load_dataset(cfg: &PipelineConfig, path: Option<&Path>) -> Res<Dataset> {
    let default = cfg.output_dir.join(DATASET_FILE);
    let path = match (path, &cfg.dataset.path, &cfg.dataset.synthetic) {
        (Some(p), _, _) => p.to_path_buf(),
        (None, Some(p), _) => p.clone(),
        (None, None, Some(spec)) => {
            let (data, _) = synthesize(spec, derive_seed(cfg.seed, "dataset"))?;
            return match data {
                Dataset::Images(b) => Ok(Dataset::Images(preprocess(b, cfg)?)),
                pts => Ok(pts),
            };
        }
        (None, None, None) if default.exists() => default,
        _ => return Err(CliError::config("no dataset: pass --input/--images or set dataset in the config")),
    };
    require_file(&path)?;
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&path)
            .map_err(|e| CliError::io(&path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| is_pnm(p))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(CliError::format(format!("{} holds no .pgm or .ppm files", path.display())));
        }
        let p = &cfg.preprocessing;
        let imgs = files
            .iter()
            .map(|f| {
                let im = read_pnm(f)?;
                match (p.height, p.width) {
                    (Some(h), Some(w)) => resize_bilinear(&im, h, w),
                    _ => Ok(im),
                }
            })
            .collect::<manigen_core::Result<Vec<_>>>()?;
        return Ok(Dataset::Images(preprocess(stack_images(&imgs)?, cfg)?));
    }
    if is_pnm(&path) {
        return Ok(Dataset::Images(preprocess(read_pnm(&path)?, cfg)?));
    }
    let t = load_tensor(&path)?;
    match t.rank() {
        4 => Ok(Dataset::Images(preprocess(ImageBatch::new(t, cfg.preprocessing.range)?, cfg)?)),
        2 => Ok(Dataset::Points(t)),
        _ => Err(CliError::format(format!(
            "{}: expected [n, d] points or [n, c, h, w] images, got {:?}",
            path.display(),
            t.shape()
        ))),
    }
}

fn load_images(cfg: &PipelineConfig, path: Option<&Path>) -> Res<ImageBatch> {
    match load_dataset(cfg, path)? {
        Dataset::Images(b) => Ok(b),
        Dataset::Points(_) => Err(CliError::config("this command needs images, the dataset is a point cloud")),
    }
}

/// Generates a synthetic dataset and its ground-truth side information
/// (latent factors, intrinsic coordinates or cluster labels).
pub fn synthesize(spec: &SyntheticSpec, seed: u64) -> Res<(Dataset, Tensor)> {
    Ok(match spec.kind {
        SyntheticKind::Spots => {
            let (b, latent) = make_spot_images(spec.n, spec.size, seed)?;
            (Dataset::Images(b), latent)
        }
        SyntheticKind::SwissRoll => {
            let m = make_swiss_roll(spec.n, spec.noise, seed)?;
            (Dataset::Points(m.points), m.intrinsic)
        }
        SyntheticKind::Blobs => {
            if spec.clusters == 0 || spec.dim == 0 {
                return Err(CliError::config("blobs need at least one cluster and dimension"));
            }
            let centers: Vec<Vec<f64>> = (0..spec.clusters)
                .map(|c| (0..spec.dim).map(|j| if j == c % spec.dim { 10.0 * (1 + c / spec.dim) as f64 } else { 0.0 }).collect())
                .collect();
            let sd = if spec.noise > 0.0 { spec.noise } else { 1.0 };
            let (x, labels) = make_blobs(spec.n, &centers, sd, seed)?;
            let l: Vec<f64> = labels.iter().map(|&v| v as f64).collect();
            (Dataset::Points(x), Tensor::matrix_from_f64(spec.n, 1, &l)?)
        }
    })
}

/// Runs the configured NLDR method on `x` (rows are samples).
pub fn compute_embedding(x: &Tensor, cfg: &PipelineConfig) -> Res<Embedding> {
    let m = &cfg.method;
    let (k, d) = (m.neighbors(), m.out_dim());
    Ok(match m.name {
        Method::Lle => lle_embed(x, k, d, m.lle_reg)?,
        Method::Isomap => isomap_embed(x, k, d)?,
        Method::Le => {
            let sigma = match m.sigma {
                Some(s) => s,
                None => le_default_sigma(x, k)?,
            };
            le_embed(x, k, sigma, d)?
        }
        Method::Tsne => {
            let tc = TsneConfig {
                dim: d,
                perplexity: m.perplexity,
                learning_rate: m.learning_rate,
                iterations: m.iterations,
                seed: derive_seed(cfg.seed, "embed"),
                theta: m.theta,
                pca_dims: m.pca_dims,
                ..TsneConfig::default()
            };
            tsne_embed(x, &tc)?.embedding
        }
    })
}

fn grid_file(b: &ImageBatch, stem: &str) -> String {
    format!("{stem}.{}", if b.channels == 1 { "pgm" } else { "ppm" })
}

fn cmd_make_dataset(cfg: &PipelineConfig) -> Res<Value> {
    let started = unix_now();
    let spec = cfg.dataset.synthetic.clone().unwrap_or_default();
    let (data, side) = synthesize(&spec, derive_seed(cfg.seed, "dataset"))?;
    let dir = &cfg.output_dir;
    let t = match &data {
        Dataset::Images(b) => b.pixels.clone(),
        Dataset::Points(p) => p.clone(),
    };
    save_tensor(&t, dir.join(DATASET_FILE))?;
    save_tensor(&side, dir.join("dataset_latent.mgt"))?;
    RunManifest::record(dir, "make-dataset", cfg.hash(), started, &[DATASET_FILE, "dataset_latent.mgt"])?;
    Ok(json!({ "command": "make-dataset", "kind": spec.kind, "shape": t.shape(), "path": dir.join(DATASET_FILE) }))
}

fn cmd_embed(cfg: &PipelineConfig, input: Option<&Path>) -> Res<Value> {
    let started = unix_now();
    let clock = Instant::now();
    let data = load_dataset(cfg, input)?;
    let e = compute_embedding(&data.rows(), cfg)?;
    let dir = &cfg.output_dir;
    let coords = dir.join(EMBEDDING_FILE);
    save_embedding(&e, &coords, &sidecar_path(&coords))?;
    RunManifest::record(dir, "embed", cfg.hash(), started, &[EMBEDDING_FILE, "embedding.json"])?;
    Ok(json!({
        "command": "embed",
        "method": e.method,
        "n": e.n(),
        "d": e.dim(),
        "runtime_seconds": clock.elapsed().as_secs_f64(),
        "diagnostics": e.diagnostics,
    }))
}

fn load_embedding_arg(cfg: &PipelineConfig, path: Option<&Path>) -> Res<Embedding> {
    let p = path.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.join(EMBEDDING_FILE));
    require_file(&p)?;
    let side = sidecar_path(&p);
    require_file(&side)?;
    Ok(load_embedding(&p, &side)?)
}

/// Interleaves originals and reconstructions (pairs side by side) in an
/// 8-column grid.
fn pair_grid(orig: &ImageBatch, recon: &ImageBatch) -> Res<ImageBatch> {
    let n = orig.count.min(recon.count);
    let parts: Vec<ImageBatch> = (0..n).flat_map(|i| [orig.select(&[i]), recon.select(&[i])]).collect();
    Ok(tile_grid(&stack_images(&parts)?, 8)?)
}

fn write_report(dir: &Path, file: &str, r: &ReconReport) -> Res<()> {
    write_json(&dir.join(file), r)
}

const GRID_SAMPLES: usize = 16;

fn cmd_train_decoder(cfg: &PipelineConfig, emb: Option<&Path>, images: Option<&Path>) -> Res<Value> {
    let started = unix_now();
    let e = load_embedding_arg(cfg, emb)?;
    let imgs = load_images(cfg, images)?;
    let mut tc = cfg.decoder.train.clone();
    tc.seed = derive_seed(cfg.seed, "train-decoder");
    let trained = train_decoder(&e, &imgs, cfg.decoder.arch, &tc)?;
    let dir = &cfg.output_dir;
    let dec = &trained.model;
    let meta = json!({ "method": e.method, "arch": cfg.decoder.arch });
    save_checkpoint(&dec.to_checkpoint(meta), dir.join(DECODER_FILE))?;
    write_report(dir, "decoder_report.json", &trained.report)?;
    let show: Vec<usize> = trained.val_indices.iter().copied().take(GRID_SAMPLES).collect();
    let raw = destandardize_embedding(&e)?.coords.select_rows(&show);
    let recon = dec.decode(&raw)?;
    let grid = pair_grid(&imgs.select(&show), &recon)?;
    let gname = grid_file(&grid, "decoder_recon");
    write_pnm(&grid, dir.join(&gname))?;
    RunManifest::record(dir, "train-decoder", cfg.hash(), started, &[DECODER_FILE, "decoder_report.json", &gname])?;
    Ok(json!({ "command": "train-decoder", "report": trained.report }))
}

fn cmd_train_ae(cfg: &PipelineConfig, images: Option<&Path>) -> Res<Value> {
    let started = unix_now();
    let imgs = load_images(cfg, images)?;
    let ac = &cfg.autoencoder;
    let mut tc = ac.train.clone();
    tc.seed = derive_seed(cfg.seed, "train-ae");
    let trained = train_autoencoder(&imgs, ac.latent_dim, ac.arch, &tc)?;
    let dir = &cfg.output_dir;
    let ae = &trained.model;
    let ckpt = manigen_core::nn::Checkpoint {
        spec: ae.spec.clone(),
        params: ae.params.clone(),
        meta: json!({ "kind": "autoencoder", "arch": ac.arch, "latent_dim": ac.latent_dim }),
    };
    save_checkpoint(&ckpt, dir.join("ae.ckpt"))?;
    write_report(dir, "ae_report.json", &trained.report)?;
    let show: Vec<usize> = trained.val_indices.iter().copied().take(GRID_SAMPLES).collect();
    let orig = imgs.select(&show);
    let grid = pair_grid(&orig, &ae.reconstruct(&orig)?)?;
    let gname = grid_file(&grid, "ae_recon");
    write_pnm(&grid, dir.join(&gname))?;
    RunManifest::record(dir, "train-ae", cfg.hash(), started, &["ae.ckpt", "ae_report.json", &gname])?;
    Ok(json!({ "command": "train-ae", "report": trained.report }))
}

/// The embedding with standardized coordinates, standardizing (with a
/// warning on stderr) when the file holds raw ones.
fn standardized(e: Embedding) -> Res<Embedding> {
    if e.standardization.is_some() {
        return Ok(e);
    }
    eprintln!("{}", json!({ "warning": "embedding was not standardized; standardizing per dimension" }));
    Ok(standardize_embedding(&e)?)
}

#[derive(Serialize)]
struct DiffusionReport {
    method: Method,
    n: usize,
    data_dim: usize,
    epochs: usize,
    initial_loss: f64,
    final_loss: f64,
    loss_history: Vec<f64>,
    wall_seconds: f64,
}

fn cmd_train_diffusion(cfg: &PipelineConfig, emb: Option<&Path>) -> Res<Value> {
    let started = unix_now();
    let clock = Instant::now();
    let e = standardized(load_embedding_arg(cfg, emb)?)?;
    let sched = NoiseSchedule::from_params(cfg.diffusion.schedule)?;
    let spec = DenoiserSpec::standard(e.dim())?;
    let mut dc = cfg.diffusion.train.clone();
    dc.seed = derive_seed(cfg.seed, "train-diffusion");
    dc.batch_size = dc.batch_size.min(e.n());
    let r = train_diffusion(&e.coords, &spec, &sched, &dc)?;
    let dir = &cfg.output_dir;
    save_checkpoint(&r.denoiser.to_checkpoint(&sched), dir.join(DENOISER_FILE))?;
    let report = DiffusionReport {
        method: e.method,
        n: e.n(),
        data_dim: e.dim(),
        epochs: dc.epochs,
        initial_loss: r.initial_loss,
        final_loss: r.final_loss,
        loss_history: r.loss_history,
        wall_seconds: clock.elapsed().as_secs_f64(),
    };
    write_json(&dir.join("diffusion_report.json"), &report)?;
    RunManifest::record(dir, "train-diffusion", cfg.hash(), started, &[DENOISER_FILE, "diffusion_report.json"])?;
    Ok(json!({ "command": "train-diffusion", "initial_loss": report.initial_loss, "final_loss": report.final_loss }))
}

fn cmd_sample(cfg: &PipelineConfig, emb: Option<&Path>, den: Option<&Path>, dec: Option<&Path>) -> Res<Value> {
    let started = unix_now();
    let dir = &cfg.output_dir;
    let den_path = den.map(Path::to_path_buf).unwrap_or_else(|| dir.join(DENOISER_FILE));
    let dec_path = dec.map(Path::to_path_buf).unwrap_or_else(|| dir.join(DECODER_FILE));
    if !den_path.exists() {
        return Err(CliError::config(format!("denoiser checkpoint {} not found", den_path.display())));
    }
    if !dec_path.exists() {
        return Err(CliError::config(format!("decoder checkpoint {} not found", dec_path.display())));
    }
    let e = standardized(load_embedding_arg(cfg, emb)?)?;
    let (denoiser, sched) = Denoiser::from_checkpoint(load_checkpoint(&den_path)?)?;
    let decoder = Decoder::from_checkpoint(load_checkpoint(&dec_path)?)?;
    let n = cfg.diffusion.n_samples;
    if n == 0 {
        return Err(CliError::config("n_samples must be positive"));
    }
    let seed = derive_seed(cfg.seed, "sample");
    let (images, run): (ImageBatch, SampleRun) = generate_images(&denoiser, &sched, &e, &decoder, n, seed)?;
    let coords = dir.join("samples.mgt");
    run.save(&coords, &sidecar_path(&coords), &sched, &den_path.display().to_string())?;
    let cols = (n as f64).sqrt().ceil() as usize;
    let grid = tile_grid(&images, cols)?;
    let gname = grid_file(&grid, "samples");
    write_pnm(&grid, dir.join(&gname))?;
    RunManifest::record(dir, "sample", cfg.hash(), started, &["samples.mgt", "samples.json", &gname])?;
    Ok(json!({ "command": "sample", "n": n, "grid": dir.join(gname), "grid_columns": cols }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRow {
    pub model: String,
    pub arch: String,
    pub val_mse: f64,
    pub val_psnr: Option<f64>,
    pub val_ssim: f64,
    pub source: String,
}

/// Rows sorted by validation MSE, best first.
pub fn evaluation_table(reports: &[PathBuf]) -> Res<Vec<EvalRow>> {
    if reports.is_empty() {
        return Err(CliError::config("evaluate needs at least one report"));
    }
    let mut rows = Vec::new();
    for p in reports {
        require_file(p)?;
        let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
        let r: ReconReport =
            serde_json::from_str(&text).map_err(|e| CliError::format(format!("{}: {e}", p.display())))?;
        rows.push(EvalRow {
            model: r.model,
            arch: r.arch,
            val_mse: r.val_mse,
            val_psnr: r.val_psnr,
            val_ssim: r.val_ssim,
            source: p.display().to_string(),
        });
    }
    rows.sort_by(|a, b| a.val_mse.total_cmp(&b.val_mse));
    Ok(rows)
}

pub fn render_table(rows: &[EvalRow]) -> String {
    let mut s = format!("{:<12} {:<11} {:>10} {:>9} {:>7}\n", "model", "arch", "val_mse", "psnr_db", "ssim");
    for r in rows {
        let psnr = r.val_psnr.map_or("inf".to_string(), |p| format!("{p:.2}"));
        s += &format!("{:<12} {:<11} {:>10.5} {:>9} {:>7.4}\n", r.model, r.arch, r.val_mse, psnr, r.val_ssim);
    }
    s
}

fn cmd_evaluate(cfg: &PipelineConfig, reports: &[PathBuf]) -> Res<Value> {
    let started = unix_now();
    let rows = evaluation_table(reports)?;
    let dir = &cfg.output_dir;
    let table = render_table(&rows);
    write_json(&dir.join("evaluation.json"), &rows)?;
    let txt = dir.join("evaluation.txt");
    std::fs::write(&txt, &table).map_err(|e| CliError::io(&txt, e))?;
    RunManifest::record(dir, "evaluate", cfg.hash(), started, &["evaluation.json", "evaluation.txt"])?;
    Ok(Value::String(table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_exit_codes() {
        let c: CliError = manigen_core::Error::Config("x".into()).into();
        assert_eq!((c.kind.as_str(), c.exit_code), ("ConfigError", 2));
        let c: CliError = manigen_core::Error::Connectivity { sizes: vec![3, 2] }.into();
        assert_eq!((c.kind.as_str(), c.exit_code), ("ConnectivityError", 1));
    }

    #[test]
    fn error_json_is_one_line() {
        let e = CliError::format("a\nb");
        let s = e.to_json();
        assert!(!s.contains('\n'));
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["error"], "FormatError");
        assert_eq!(v["exit_code"], 2);
    }

    #[test]
    fn table_is_sorted_ascending() {
        let dir = tempfile::tempdir().unwrap();
        let mk = |name: &str, mse: f64| {
            let r = ReconReport {
                model: name.into(),
                arch: "paper_conv".into(),
                n_train: 8,
                n_val: 2,
                epochs: 1,
                train_loss: vec![1.0],
                val_loss: vec![1.0],
                val_mse_curve: vec![mse],
                best_epoch: 0,
                val_mse: mse,
                val_psnr: Some(10.0),
                val_ssim: 0.5,
                wall_seconds: 0.0,
            };
            let p = dir.path().join(format!("{name}.json"));
            write_json(&p, &r).unwrap();
            p
        };
        let paths = vec![mk("tsne", 0.12), mk("autoencoder", 0.01), mk("lle", 0.05)];
        let rows = evaluation_table(&paths).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.model.as_str()).collect();
        assert_eq!(names, ["autoencoder", "lle", "tsne"]);
        assert_eq!(render_table(&rows).lines().count(), 4);
    }
}
