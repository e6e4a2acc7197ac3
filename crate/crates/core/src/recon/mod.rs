//! Decoders from fixed embeddings back to images, the convolutional
//! autoencoder baseline, and reconstruction metrics.

mod metrics;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBatch;
use crate::nldr::{destandardize_coords, DimStats, Embedding};
use crate::nn::{
    adam_step, backward, cosine_lr, forward, predict, AdamConfig, AdamState, Checkpoint, LayerSpec, Mode,
    NetworkSpec, Parameters,
};
use crate::rng::{derive_index_seed, derive_seed, seeded};
use crate::tensor::Tensor;

pub use metrics::{metric_mse, metric_psnr, metric_ssim, psnr_from_mse, unit_mse, SSIM_WINDOW};

/// Optimization and loss settings shared by decoder and autoencoder
/// training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Floor of the cosine schedule.
    pub lr_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub lambda_mse: f64,
    pub lambda_perceptual: f64,
    pub coord_dropout_p: f64,
    pub seed: u64,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            lr: 2e-4,
            lr_min: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 1e-4,
            lambda_mse: 1.0,
            lambda_perceptual: 0.0,
            coord_dropout_p: 0.1,
            seed: 0,
            val_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2 for batch norm, got {}", self.batch_size));
        }
        if !(self.lr > 0.0) || !(self.lr_min >= 0.0) || self.lr_min > self.lr {
            return bad(format!("need 0 <= lr_min <= lr, lr > 0; got lr {} lr_min {}", self.lr, self.lr_min));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must be in [0, 1)".into());
        }
        if !(self.weight_decay >= 0.0) || !(self.lambda_mse >= 0.0) || !(self.lambda_perceptual >= 0.0) {
            return bad("weight decay and loss weights must be nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.coord_dropout_p) {
            return bad(format!("coord_dropout_p {} outside [0, 1)", self.coord_dropout_p));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!("val_fraction {} outside (0, 1)", self.val_fraction));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { beta1: self.beta1, beta2: self.beta2, eps: 1e-8, weight_decay: self.weight_decay }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderArch {
    PaperConv,
    Dense,
}

impl std::str::FromStr for DecoderArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_conv" => Ok(DecoderArch::PaperConv),
            "dense" => Ok(DecoderArch::Dense),
            other => Err(Error::Config(format!("unknown decoder architecture {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoencoderArch {
    Conv,
    Linear,
}

impl std::str::FromStr for AutoencoderArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv" => Ok(AutoencoderArch::Conv),
            "linear" => Ok(AutoencoderArch::Linear),
            other => Err(Error::Config(format!("unknown autoencoder architecture {other:?}"))),
        }
    }
}

/// Channel widths of the upsampling stages at full scale.
pub const PAPER_DECODER_WIDTHS: [usize; 3] = [128, 64, 32];
const SEED_CHANNELS: usize = 8;

fn trailing_halvings(n: usize) -> usize {
    n.trailing_zeros() as usize
}

fn check_out_shape(out_shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *out_shape {
        [c, h, w] if (c == 1 || c == 3) && h > 0 && w > 0 => Ok((c, h, w)),
        _ => Err(Error::shape("decoder output", format!("expected [1 or 3, H, W], got {out_shape:?}"))),
    }
}

/// The projection-then-upsample decoder: `Dense(d -> 8 s s)`, reshape to
/// `8 x s x s`, one `ConvT(k4, s2, p1) + BatchNorm + ReLU` stage per entry of
/// `widths` (each doubling the side), a stride-1 `ConvT(k3)` to the output
/// channels, then `Tanh`. The output side must equal `s * 2^stages`.
pub fn build_decoder_with_widths(embed_dim: usize, out_shape: &[usize], widths: &[usize]) -> Result<NetworkSpec> {
    let (c, h, w) = check_out_shape(out_shape)?;
    let stages = widths.len();
    if embed_dim == 0 || stages == 0 || widths.contains(&0) {
        return Err(Error::shape("decoder", "need a positive embedding dim and at least one stage"));
    }
    let f = 1usize << stages;
    if h != w || h % f != 0 {
        return Err(Error::shape(
            "decoder output",
            format!("{h}x{w} is not reachable by {stages} doublings from a square seed"),
        ));
    }
    let s = h / f;
    let mut layers = vec![
        LayerSpec::dense(embed_dim, SEED_CHANNELS * s * s),
        LayerSpec::Reshape { shape: vec![SEED_CHANNELS, s, s] },
    ];
    let mut cin = SEED_CHANNELS;
    for &wd in widths {
        layers.push(LayerSpec::conv_t(cin, wd, 4, 2, 1, 0));
        layers.push(LayerSpec::batch_norm(wd));
        layers.push(LayerSpec::ReLU);
        cin = wd;
    }
    layers.push(LayerSpec::conv_t(cin, c, 3, 1, 1, 0));
    layers.push(LayerSpec::Tanh);
    NetworkSpec::new(vec![embed_dim], layers)
}

/// The decoder at its default widths. Three stages (8 -> 16 -> 32 -> 64 at
/// full scale) when the side allows; smaller outputs keep the last stages,
/// e.g. 28x28 runs 7 -> 14 -> 28 with widths 64, 32.
pub fn build_paper_decoder(embed_dim: usize, out_shape: &[usize]) -> Result<NetworkSpec> {
    let (_, h, w) = check_out_shape(out_shape)?;
    let stages = trailing_halvings(h).min(trailing_halvings(w)).min(PAPER_DECODER_WIDTHS.len());
    if stages == 0 {
        return Err(Error::shape("decoder output", format!("{h}x{w} has no factor of two to upsample to")));
    }
    build_decoder_with_widths(embed_dim, out_shape, &PAPER_DECODER_WIDTHS[PAPER_DECODER_WIDTHS.len() - stages..])
}

/// Fully connected decoder: two hidden ReLU layers of 256, then `Tanh`.
pub fn build_dense_decoder(embed_dim: usize, out_shape: &[usize]) -> Result<NetworkSpec> {
    let (c, h, w) = check_out_shape(out_shape)?;
    NetworkSpec::new(
        vec![embed_dim],
        vec![
            LayerSpec::dense(embed_dim, 256),
            LayerSpec::ReLU,
            LayerSpec::dense(256, 256),
            LayerSpec::ReLU,
            LayerSpec::dense(256, c * h * w),
            LayerSpec::Reshape { shape: vec![c, h, w] },
            LayerSpec::Tanh,
        ],
    )
}

pub fn build_decoder(arch: DecoderArch, embed_dim: usize, out_shape: &[usize]) -> Result<NetworkSpec> {
    match arch {
        DecoderArch::PaperConv => build_paper_decoder(embed_dim, out_shape),
        DecoderArch::Dense => build_dense_decoder(embed_dim, out_shape),
    }
}

/// Encoder channel ladder: 32, 64, 128, 256, truncated to `stages`.
fn ae_widths(stages: usize) -> Vec<usize> {
    (0..stages).map(|i| 32 << i).collect()
}

/// Convolutional autoencoder: `[Conv3x3 + BatchNorm + LeakyReLU + MaxPool]`
/// per stage (up to four, as many as the side's factors of two allow),
/// `Dense` to the latent, then the mirror image with transposed
/// convolutions ending in `Tanh`.
pub fn build_conv_autoencoder(in_shape: &[usize], latent_dim: usize) -> Result<NetworkSpec> {
    let (c, h, w) = check_out_shape(in_shape)?;
    let stages = trailing_halvings(h).min(trailing_halvings(w)).min(4);
    if stages == 0 || latent_dim == 0 {
        return Err(Error::shape("autoencoder", format!("{h}x{w} cannot be pooled even once")));
    }
    let widths = ae_widths(stages);
    let (bh, bw) = (h >> stages, w >> stages);
    let mut layers = Vec::new();
    let mut cin = c;
    for &wd in &widths {
        layers.push(LayerSpec::conv(cin, wd, 3, 1, 1));
        layers.push(LayerSpec::batch_norm(wd));
        layers.push(LayerSpec::leaky_relu());
        layers.push(LayerSpec::MaxPool2x2);
        cin = wd;
    }
    let flat = cin * bh * bw;
    layers.push(LayerSpec::dense(flat, latent_dim));
    layers.push(LayerSpec::dense(latent_dim, flat));
    layers.push(LayerSpec::Reshape { shape: vec![cin, bh, bw] });
    for i in (1..stages).rev() {
        layers.push(LayerSpec::conv_t(widths[i], widths[i - 1], 4, 2, 1, 0));
        layers.push(LayerSpec::batch_norm(widths[i - 1]));
        layers.push(LayerSpec::leaky_relu());
    }
    layers.push(LayerSpec::conv_t(widths[0], c, 4, 2, 1, 0));
    layers.push(LayerSpec::Tanh);
    NetworkSpec::new(in_shape.to_vec(), layers)
}

/// Two dense layers through the latent, no nonlinearity.
pub fn build_linear_autoencoder(in_shape: &[usize], latent_dim: usize) -> Result<NetworkSpec> {
    let (c, h, w) = check_out_shape(in_shape)?;
    let n = c * h * w;
    NetworkSpec::new(
        in_shape.to_vec(),
        vec![LayerSpec::dense(n, latent_dim), LayerSpec::dense(latent_dim, n), LayerSpec::Reshape { shape: vec![c, h, w] }],
    )
}

/// `lambda_mse * mean((pred - target)^2) + lambda_perceptual * L_perc` and
/// its gradient with respect to `pred`. No perceptual backend exists, so a
/// positive `lambda_perceptual` is rejected.
pub fn total_loss(pred: &Tensor, target: &Tensor, cfg: &TrainConfig) -> Result<(f64, Tensor)> {
    if cfg.lambda_perceptual > 0.0 {
        return Err(Error::Config(
            "lambda_perceptual > 0 needs a perceptual feature backend, and none is available".into(),
        ));
    }
    if pred.shape() != target.shape() {
        return Err(Error::shape("loss", format!("{:?} vs {:?}", pred.shape(), target.shape())));
    }
    let n = pred.len() as f64;
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (p, t) in pred.data().iter().zip(target.data()) {
        let d = *p as f64 - *t as f64;
        sum += d * d;
        grad.push((cfg.lambda_mse * 2.0 * d / n) as f32);
    }
    Ok((cfg.lambda_mse * sum / n, Tensor::new(pred.shape().to_vec(), grad)?))
}

/// Zeroes each coordinate independently with probability `p`; survivors
/// keep their value (no rescaling).
pub fn coordinate_dropout(coords: &Tensor, p: f64, seed: u64) -> Result<Tensor> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Parameter(format!("dropout probability {p} outside [0, 1)")));
    }
    if p == 0.0 {
        return Ok(coords.clone());
    }
    let mut rng = seeded(seed);
    let data = coords
        .data()
        .iter()
        .map(|&v| if rng.random::<f64>() < p { 0.0 } else { v })
        .collect();
    Tensor::new(coords.shape().to_vec(), data)
}

/// Training summary. `val_mse` and `val_psnr` use pixels mapped to
/// `[0, 1]`; `val_psnr` is `None` when the reconstruction is exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    pub model: String,
    pub arch: String,
    pub n_train: usize,
    pub n_val: usize,
    pub epochs: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_mse_curve: Vec<f64>,
    pub best_epoch: usize,
    pub val_mse: f64,
    pub val_psnr: Option<f64>,
    pub val_ssim: f64,
    pub wall_seconds: f64,
}

/// A decoder together with the input standardization it was trained
/// under; `decode` takes raw embedding coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    pub spec: NetworkSpec,
    pub params: Parameters,
    pub input_norm: Vec<DimStats>,
}

impl Decoder {
    pub fn embed_dim(&self) -> usize {
        self.input_norm.len()
    }

    fn normalize(&self, coords: &Tensor) -> Result<Tensor> {
        let d = self.embed_dim();
        if coords.rank() != 2 || coords.row_len() != d {
            return Err(Error::shape("decoder input", format!("expected [n, {d}], got {:?}", coords.shape())));
        }
        let out: Vec<f64> = coords
            .data()
            .iter()
            .enumerate()
            .map(|(k, &v)| (v as f64 - self.input_norm[k % d].mean) / self.input_norm[k % d].sd)
            .collect();
        Tensor::matrix_from_f64(coords.rows(), d, &out)
    }

    /// Eval-mode decoding of raw coordinates to images in `(-1, 1)`.
    pub fn decode(&self, coords: &Tensor) -> Result<ImageBatch> {
        let x = self.normalize(coords)?;
        let y = predict_chunked(&self.spec, &self.params, &x)?;
        ImageBatch::new(y, (-1.0, 1.0))
    }

    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        Checkpoint {
            spec: self.spec.clone(),
            params: self.params.clone(),
            meta: serde_json::json!({ "input_norm": self.input_norm, "extra": extra }),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let input_norm: Vec<DimStats> = serde_json::from_value(ckpt.meta["input_norm"].clone())
            .map_err(|e| Error::Format(format!("decoder checkpoint lacks input_norm: {e}")))?;
        if ckpt.spec.input_shape != [input_norm.len()] {
            return Err(Error::Format("decoder input_norm does not match its network".into()));
        }
        Ok(Decoder { spec: ckpt.spec, params: ckpt.params, input_norm })
    }
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct Trained<M> {
    pub model: M,
    pub report: ReconReport,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    pub spec: NetworkSpec,
    pub params: Parameters,
}

impl Autoencoder {
    pub fn reconstruct(&self, images: &ImageBatch) -> Result<ImageBatch> {
        let x = to_signed_unit(images)?;
        let y = predict_chunked(&self.spec, &self.params, &x)?;
        let clamped: Vec<f32> = y.data().iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        ImageBatch::new(Tensor::new(y.shape().to_vec(), clamped)?, (-1.0, 1.0))
    }
}

const PREDICT_CHUNK: usize = 256;

fn predict_chunked(spec: &NetworkSpec, params: &Parameters, x: &Tensor) -> Result<Tensor> {
    let n = x.shape()[0];
    let mut out = Vec::new();
    let mut shape = Vec::new();
    for start in (0..n).step_by(PREDICT_CHUNK) {
        let idx: Vec<usize> = (start..(start + PREDICT_CHUNK).min(n)).collect();
        let y = predict(spec, params, &x.select_rows(&idx))?;
        shape = y.shape().to_vec();
        out.extend_from_slice(y.data());
    }
    if n == 0 {
        let mut s = vec![0];
        s.extend(spec.output_shape()?);
        return Ok(Tensor::zeros(s));
    }
    shape[0] = n;
    Tensor::new(shape, out)
}

/// Pixels mapped affinely to `[-1, 1]`, the decoder's output range.
fn to_signed_unit(images: &ImageBatch) -> Result<Tensor> {
    let u = images.unit_range_f64();
    let v: Vec<f64> = u.iter().map(|x| 2.0 * x - 1.0).collect();
    Tensor::from_f64(images.pixels.shape().to_vec(), &v)
}

fn split_indices(n: usize, cfg: &TrainConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_val = (n as f64 * cfg.val_fraction).round() as usize;
    if n_val < 1 || n - n_val < 2 {
        return Err(Error::Config(format!(
            "{n} samples with val_fraction {} leave {n_val} for validation and {} for training",
            cfg.val_fraction,
            n - n_val.min(n)
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded(derive_seed(cfg.seed, "split")));
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    Ok((train, val))
}

struct FitOutcome {
    params: Parameters,
    train_loss: Vec<f64>,
    val_loss: Vec<f64>,
    val_mse_curve: Vec<f64>,
    best_epoch: usize,
}

/// Mini-batch Adam with a cosine schedule over all steps; keeps the
/// parameters of the epoch with the lowest validation MSE.
#[allow(clippy::too_many_arguments)]
fn fit(
    spec: &NetworkSpec,
    inputs: &Tensor,
    targets: &Tensor,
    train: &[usize],
    val: &[usize],
    cfg: &TrainConfig,
    input_dropout: f64,
) -> Result<FitOutcome> {
    let mut params = Parameters::init(spec, derive_seed(cfg.seed, "init"))?;
    let mut adam = AdamState::new(params.len());
    let adam_cfg = cfg.adam();
    let bs = cfg.batch_size;
    let per_epoch = train.len() / bs + usize::from(train.len() % bs >= 2);
    let total_steps = cfg.epochs * per_epoch;
    let (val_x, val_t) = (inputs.select_rows(val), targets.select_rows(val));
    let shuffle_root = derive_seed(cfg.seed, "shuffle");
    let dropout_root = derive_seed(cfg.seed, "coord-dropout");
    let forward_root = derive_seed(cfg.seed, "forward");
    let mut order = train.to_vec();
    let mut step = 0usize;
    let mut best: Option<(f64, usize, Parameters)> = None;
    let (mut train_curve, mut val_curve, mut mse_curve) = (Vec::new(), Vec::new(), Vec::new());
    for epoch in 0..cfg.epochs {
        order.copy_from_slice(train);
        order.shuffle(&mut seeded(derive_index_seed(shuffle_root, epoch as u64)));
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for chunk in order.chunks(bs) {
            if chunk.len() < 2 {
                continue;
            }
            let mut x = inputs.select_rows(chunk);
            if input_dropout > 0.0 {
                x = coordinate_dropout(&x, input_dropout, derive_index_seed(dropout_root, step as u64))?;
            }
            let t = targets.select_rows(chunk);
            let (y, tape) = forward(spec, &params, &x, Mode::Train, derive_index_seed(forward_root, step as u64))?;
            let (loss, dy) = total_loss(&y, &t, cfg)?;
            if !loss.is_finite() {
                return Err(Error::Optimization { iteration: step });
            }
            let (grads, _) = backward(spec, &params, &tape, &dy)?;
            let lr = cosine_lr(step, total_steps, cfg.lr, cfg.lr_min);
            let (mut next, next_adam) = adam_step(&params, &grads, &adam, &adam_cfg, lr)?;
            next.update_running_stats(spec, &tape)?;
            params = next;
            adam = next_adam;
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
            step += 1;
        }
        train_curve.push(loss_sum / seen.max(1) as f64);
        let pred = predict_chunked(spec, &params, &val_x)?;
        let (vloss, _) = total_loss(&pred, &val_t, cfg)?;
        // targets live in [-1, 1]; halve the differences for [0, 1] units
        let vmse = metric_mse(&pred, &val_t)? / 4.0;
        val_curve.push(vloss);
        mse_curve.push(vmse);
        if best.as_ref().is_none_or(|b| vmse < b.0) {
            best = Some((vmse, epoch, params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok(FitOutcome { params, train_loss: train_curve, val_loss: val_curve, val_mse_curve: mse_curve, best_epoch })
}

fn finish_report(
    model: &str,
    arch: &str,
    fit: &FitOutcome,
    pred: &Tensor,
    target: &Tensor,
    n_train: usize,
    cfg: &TrainConfig,
    started: Instant,
) -> Result<ReconReport> {
    let p = ImageBatch::new(clamp_unit(pred)?, (-1.0, 1.0))?;
    let t = ImageBatch::new(target.clone(), (-1.0, 1.0))?;
    let mse = fit.val_mse_curve[fit.best_epoch];
    let psnr = psnr_from_mse(mse);
    Ok(ReconReport {
        model: model.into(),
        arch: arch.into(),
        n_train,
        n_val: t.count,
        epochs: cfg.epochs,
        train_loss: fit.train_loss.clone(),
        val_loss: fit.val_loss.clone(),
        val_mse_curve: fit.val_mse_curve.clone(),
        best_epoch: fit.best_epoch,
        val_mse: mse,
        val_psnr: psnr.is_finite().then_some(psnr),
        val_ssim: metric_ssim(&p, &t).or_else(|e| match e {
            Error::Parameter(_) => Ok(f64::NAN),
            other => Err(other),
        })?,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

fn clamp_unit(t: &Tensor) -> Result<Tensor> {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v.clamp(-1.0, 1.0)).collect())
}

fn per_dim_stats(x: &Tensor, rows: &[usize]) -> Result<Vec<DimStats>> {
    let d = x.row_len();
    let n = rows.len() as f64;
    (0..d)
        .map(|j| {
            let vals: Vec<f64> = rows.iter().map(|&i| x.row(i)[j] as f64).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            if !(sd > 1e-12 * mean.abs().max(1.0)) {
                return Err(Error::DegenerateDimension { dim: j });
            }
            Ok(DimStats { mean, sd })
        })
        .collect()
}

/// Trains a decoder from fixed embedding coordinates to images. Inputs are
/// the raw embedding (standardized embeddings are mapped back first); the
/// decoder standardizes them internally with training-split statistics.
pub fn train_decoder(
    e: &Embedding,
    images: &ImageBatch,
    arch: DecoderArch,
    cfg: &TrainConfig,
) -> Result<Trained<Decoder>> {
    cfg.validate()?;
    if e.n() != images.count {
        return Err(Error::Alignment(format!("{} embedding rows but {} images", e.n(), images.count)));
    }
    let started = Instant::now();
    let raw = match &e.standardization {
        Some(stats) => destandardize_coords(&e.coords, stats)?,
        None => e.coords.clone(),
    };
    let (train, val) = split_indices(e.n(), cfg)?;
    let spec = build_decoder(arch, e.dim(), &[images.channels, images.height, images.width])?;
    let input_norm = per_dim_stats(&raw, &train)?;
    let mut dec = Decoder { spec: spec.clone(), params: Parameters::init(&spec, 0)?, input_norm };
    let inputs = dec.normalize(&raw)?;
    let targets = to_signed_unit(images)?;
    let outcome = fit(&spec, &inputs, &targets, &train, &val, cfg, cfg.coord_dropout_p)?;
    dec.params = outcome.params.clone();
    let pred = predict_chunked(&spec, &dec.params, &inputs.select_rows(&val))?;
    let arch_name = match arch {
        DecoderArch::PaperConv => "paper_conv",
        DecoderArch::Dense => "dense",
    };
    let report = finish_report(e.method.name(), arch_name, &outcome, &pred, &targets.select_rows(&val), train.len(), cfg, started)?;
    Ok(Trained { model: dec, report, train_indices: train, val_indices: val })
}

/// Trains the autoencoder end to end on the images themselves (no
/// coordinate dropout).
pub fn train_autoencoder(
    images: &ImageBatch,
    latent_dim: usize,
    arch: AutoencoderArch,
    cfg: &TrainConfig,
) -> Result<Trained<Autoencoder>> {
    cfg.validate()?;
    let started = Instant::now();
    let shape = [images.channels, images.height, images.width];
    let spec = match arch {
        AutoencoderArch::Conv => build_conv_autoencoder(&shape, latent_dim)?,
        AutoencoderArch::Linear => build_linear_autoencoder(&shape, latent_dim)?,
    };
    let (train, val) = split_indices(images.count, cfg)?;
    let x = to_signed_unit(images)?;
    let outcome = fit(&spec, &x, &x, &train, &val, cfg, 0.0)?;
    let pred = predict_chunked(&spec, &outcome.params, &x.select_rows(&val))?;
    let arch_name = match arch {
        AutoencoderArch::Conv => "conv",
        AutoencoderArch::Linear => "linear",
    };
    let report = finish_report("autoencoder", arch_name, &outcome, &pred, &x.select_rows(&val), train.len(), cfg, started)?;
    Ok(Trained {
        model: Autoencoder { spec, params: outcome.params },
        report,
        train_indices: train,
        val_indices: val,
    })
}
