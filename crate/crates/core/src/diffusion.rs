//! Denoising diffusion over embedding coordinates: the noise schedule, the
//! closed-form forward corruption, an MLP noise predictor, ancestral
//! sampling, and decoding of sampled coordinates to images.

use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBatch;
use crate::nldr::{destandardize_coords, Embedding};
use crate::nn::{
    adam_step, backward, forward, predict, AdamConfig, AdamState, Checkpoint, LayerSpec, Mode, NetworkSpec,
    Parameters,
};
use crate::recon::Decoder;
use crate::rng::{derive_index_seed, derive_seed, seeded};
use crate::tensor::{save_tensor, Tensor};

/// Per-timestep noise levels, indexed `1..=T` through the accessors.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub t_max: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

/// The three numbers a schedule is rebuilt from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleParams {
    #[serde(rename = "T")]
    pub t_max: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams { t_max: 1000, beta_start: 1e-4, beta_end: 0.02 }
    }
}

/// `beta_t = beta_start + (t - 1) / (T - 1) * (beta_end - beta_start)`.
pub fn linear_schedule(t_max: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if t_max < 2 {
        return Err(Error::Parameter(format!("schedule needs T >= 2, got {t_max}")));
    }
    if !(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0) {
        return Err(Error::Parameter(format!(
            "need 0 < beta_start < beta_end < 1, got {beta_start} and {beta_end}"
        )));
    }
    let span = beta_end - beta_start;
    let beta: Vec<f64> = (0..t_max)
        .map(|i| if i + 1 == t_max { beta_end } else { beta_start + i as f64 / (t_max - 1) as f64 * span })
        .collect();
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(t_max);
    let mut acc = 1.0;
    for a in &alpha {
        acc *= a;
        alpha_bar.push(acc);
    }
    Ok(NoiseSchedule { t_max, beta_start, beta_end, beta, alpha, alpha_bar })
}

impl NoiseSchedule {
    pub fn from_params(p: ScheduleParams) -> Result<Self> {
        linear_schedule(p.t_max, p.beta_start, p.beta_end)
    }

    pub fn params(&self) -> ScheduleParams {
        ScheduleParams { t_max: self.t_max, beta_start: self.beta_start, beta_end: self.beta_end }
    }

    fn idx(&self, t: usize) -> usize {
        assert!((1..=self.t_max).contains(&t), "timestep {t} outside 1..={}", self.t_max);
        t - 1
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[self.idx(t)]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[self.idx(t)]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[self.idx(t)]
    }
}

/// `sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`.
pub fn q_sample(x0: &Tensor, t: usize, eps: &Tensor, sched: &NoiseSchedule) -> Result<Tensor> {
    if !(1..=sched.t_max).contains(&t) {
        return Err(Error::Parameter(format!("timestep {t} outside 1..={}", sched.t_max)));
    }
    if x0.shape() != eps.shape() {
        return Err(Error::shape("q_sample", format!("x0 {:?} vs eps {:?}", x0.shape(), eps.shape())));
    }
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let out: Vec<f64> = x0.data().iter().zip(eps.data()).map(|(&x, &e)| a * x as f64 + b * e as f64).collect();
    Tensor::from_f64(x0.shape().to_vec(), &out)
}

/// Sinusoidal timestep features laid out as `(sin(t w_k), cos(t w_k))`
/// pairs with `w_k = 10000^(-2k / dim)`.
pub fn time_embedding(t: usize, t_max: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::Parameter(format!("time embedding dim must be even and positive, got {dim}")));
    }
    if t > t_max {
        return Err(Error::Parameter(format!("timestep {t} beyond T = {t_max}")));
    }
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim / 2 {
        let w = 10000f64.powf(-2.0 * k as f64 / dim as f64);
        let a = t as f64 * w;
        out.push(a.sin());
        out.push(a.cos());
    }
    Ok(out)
}

pub const TIME_EMBED_DIM: usize = 32;
pub const DENOISER_HIDDEN: [usize; 3] = [256, 256, 256];

/// MLP noise predictor over `[x_t, time_embedding(t)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserSpec {
    pub data_dim: usize,
    pub hidden: Vec<usize>,
    pub time_embed_dim: usize,
    pub net: NetworkSpec,
}

impl DenoiserSpec {
    pub fn new(data_dim: usize, hidden: &[usize], time_embed_dim: usize) -> Result<Self> {
        if data_dim == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::Parameter("denoiser needs a positive data dim and hidden widths".into()));
        }
        if time_embed_dim == 0 || time_embed_dim % 2 != 0 {
            return Err(Error::Parameter(format!("time embedding dim must be even, got {time_embed_dim}")));
        }
        let mut layers = Vec::new();
        let mut width = data_dim + time_embed_dim;
        for &h in hidden {
            layers.push(LayerSpec::dense(width, h));
            layers.push(LayerSpec::ReLU);
            width = h;
        }
        layers.push(LayerSpec::dense(width, data_dim));
        let net = NetworkSpec::new(vec![data_dim + time_embed_dim], layers)?;
        Ok(DenoiserSpec { data_dim, hidden: hidden.to_vec(), time_embed_dim, net })
    }

    /// Three hidden layers of 256 and a 32-wide time embedding.
    pub fn standard(data_dim: usize) -> Result<Self> {
        Self::new(data_dim, &DENOISER_HIDDEN, TIME_EMBED_DIM)
    }

    /// Network input rows `[x_t | temb(t)]` for a batch with per-row timesteps.
    fn inputs(&self, x: &[f64], ts: &[usize], t_max: usize) -> Result<Tensor> {
        let (d, e) = (self.data_dim, self.time_embed_dim);
        let mut out = Vec::with_capacity(ts.len() * (d + e));
        for (row, &t) in x.chunks(d).zip(ts) {
            out.extend_from_slice(row);
            out.extend(time_embedding(t, t_max, e)?);
        }
        Tensor::matrix_from_f64(ts.len(), d + e, &out)
    }
}

/// Anything that predicts the noise in `x_t` (row-major `[b, d]`) at a
/// shared timestep.
pub trait NoisePredictor: Sync {
    fn data_dim(&self) -> usize;
    fn predict_noise(&self, x: &[f64], t: usize, sched: &NoiseSchedule) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Denoiser {
    pub spec: DenoiserSpec,
    pub params: Parameters,
}

impl Denoiser {
    pub fn init(spec: DenoiserSpec, seed: u64) -> Result<Self> {
        let params = Parameters::init(&spec.net, seed)?;
        Ok(Denoiser { spec, params })
    }

    pub fn to_checkpoint(&self, sched: &NoiseSchedule) -> Checkpoint {
        Checkpoint {
            spec: self.spec.net.clone(),
            params: self.params.clone(),
            meta: serde_json::json!({
                "kind": "denoiser",
                "data_dim": self.spec.data_dim,
                "hidden": self.spec.hidden,
                "time_embed_dim": self.spec.time_embed_dim,
                "schedule": sched.params(),
            }),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<(Self, NoiseSchedule)> {
        let field = |k: &str| ckpt.meta.get(k).cloned().ok_or_else(|| Error::Format(format!("denoiser checkpoint lacks {k}")));
        let parse = |e: serde_json::Error| Error::Format(format!("denoiser checkpoint: {e}"));
        let data_dim: usize = serde_json::from_value(field("data_dim")?).map_err(parse)?;
        let hidden: Vec<usize> = serde_json::from_value(field("hidden")?).map_err(parse)?;
        let time_embed_dim: usize = serde_json::from_value(field("time_embed_dim")?).map_err(parse)?;
        let sched_params: ScheduleParams = serde_json::from_value(field("schedule")?).map_err(parse)?;
        let spec = DenoiserSpec::new(data_dim, &hidden, time_embed_dim)?;
        if spec.net != ckpt.spec {
            return Err(Error::Format("denoiser metadata disagrees with the stored network".into()));
        }
        ckpt.params.check(&spec.net)?;
        Ok((Denoiser { spec, params: ckpt.params }, NoiseSchedule::from_params(sched_params)?))
    }
}

impl NoisePredictor for Denoiser {
    fn data_dim(&self) -> usize {
        self.spec.data_dim
    }

    fn predict_noise(&self, x: &[f64], t: usize, sched: &NoiseSchedule) -> Result<Vec<f64>> {
        let b = x.len() / self.spec.data_dim;
        let input = self.spec.inputs(x, &vec![t; b], sched.t_max)?;
        Ok(predict(&self.spec.net, &self.params, &input)?.to_f64())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig { epochs: 100, batch_size: 64, lr: 1e-4, weight_decay: 0.0, seed: 0 }
    }
}

/// Largest per-dimension deviation from zero mean / unit sd accepted as
/// standardized input.
pub const STANDARDIZED_TOLERANCE: f64 = 0.1;

fn check_standardized(coords: &Tensor) -> Result<()> {
    let (n, d) = (coords.rows(), coords.row_len());
    let x = coords.to_f64();
    for j in 0..d {
        let mean = (0..n).map(|i| x[i * d + j]).sum::<f64>() / n as f64;
        let sd = ((0..n).map(|i| (x[i * d + j] - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if mean.abs() > STANDARDIZED_TOLERANCE || (sd - 1.0).abs() > STANDARDIZED_TOLERANCE {
            return Err(Error::Config(format!(
                "diffusion input dimension {j} is not standardized (mean {mean:.3}, sd {sd:.3})"
            )));
        }
    }
    Ok(())
}

/// Noise-prediction loss, averaged over batch rows and coordinates (so an
/// untrained near-zero predictor scores about 1).
fn batch_loss(
    spec: &DenoiserSpec,
    params: &Parameters,
    sched: &NoiseSchedule,
    x0: &[f64],
    rng: &mut crate::rng::Rng,
    mode: Mode,
    fwd_seed: u64,
) -> Result<(f64, Option<Tensor>)> {
    let d = spec.data_dim;
    let b = x0.len() / d;
    let ts: Vec<usize> = (0..b).map(|_| rng.random_range(1..=sched.t_max)).collect();
    let eps: Vec<f64> = (0..b * d).map(|_| rng.sample(StandardNormal)).collect();
    let mut xt = Vec::with_capacity(b * d);
    for (i, &t) in ts.iter().enumerate() {
        let ab = sched.alpha_bar(t);
        for j in 0..d {
            xt.push(ab.sqrt() * x0[i * d + j] + (1.0 - ab).sqrt() * eps[i * d + j]);
        }
    }
    let input = spec.inputs(&xt, &ts, sched.t_max)?;
    let scale = 1.0 / (b * d) as f64;
    let (pred, grad) = match mode {
        Mode::Eval => (predict(&spec.net, params, &input)?, None),
        Mode::Train => {
            let (y, tape) = forward(&spec.net, params, &input, Mode::Train, fwd_seed)?;
            let dy: Vec<f64> = y.data().iter().zip(&eps).map(|(&p, e)| 2.0 * (p as f64 - e) * scale).collect();
            let (g, _) = backward(&spec.net, params, &tape, &Tensor::from_f64(y.shape().to_vec(), &dy)?)?;
            (y, Some(g))
        }
    };
    let loss = pred.data().iter().zip(&eps).map(|(&p, e)| (p as f64 - e).powi(2)).sum::<f64>() * scale;
    Ok((loss, grad))
}

/// Mean loss over one pass of `coords` with a fixed `(t, eps)` draw per
/// row, so two parameter sets can be compared on identical noise.
pub fn diffusion_loss(
    denoiser: &Denoiser,
    sched: &NoiseSchedule,
    coords: &Tensor,
    seed: u64,
) -> Result<f64> {
    let d = denoiser.spec.data_dim;
    if coords.rank() != 2 || coords.row_len() != d {
        return Err(Error::shape("diffusion loss", format!("expected [n, {d}], got {:?}", coords.shape())));
    }
    let x = coords.to_f64();
    let mut rng = seeded(seed);
    let mut total = 0.0;
    for chunk in x.chunks(256 * d) {
        let (l, _) = batch_loss(&denoiser.spec, &denoiser.params, sched, chunk, &mut rng, Mode::Eval, 0)?;
        total += l * chunk.len() as f64;
    }
    Ok(total / x.len() as f64)
}

#[derive(Clone, Debug)]
pub struct DiffusionTrained {
    pub denoiser: Denoiser,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
    /// [`diffusion_loss`] before and after training on the same noise draw.
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Trains the noise predictor with uniform timesteps and fresh Gaussian
/// noise per batch. `coords` must already be standardized.
pub fn train_diffusion(
    coords: &Tensor,
    spec: &DenoiserSpec,
    sched: &NoiseSchedule,
    cfg: &DiffusionConfig,
) -> Result<DiffusionTrained> {
    if cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0) || !(cfg.weight_decay >= 0.0) {
        return Err(Error::Config("diffusion needs positive epochs, batch size and learning rate".into()));
    }
    if coords.rank() != 2 || coords.row_len() != spec.data_dim {
        return Err(Error::shape(
            "diffusion training",
            format!("expected [n, {}], got {:?}", spec.data_dim, coords.shape()),
        ));
    }
    let n = coords.rows();
    if n < cfg.batch_size {
        return Err(Error::Config(format!("{n} rows is fewer than batch size {}", cfg.batch_size)));
    }
    check_standardized(coords)?;
    let mut denoiser = Denoiser::init(spec.clone(), derive_seed(cfg.seed, "init"))?;
    let eval_seed = derive_seed(cfg.seed, "eval");
    let initial_loss = diffusion_loss(&denoiser, sched, coords, eval_seed)?;
    let adam_cfg = AdamConfig { weight_decay: cfg.weight_decay, ..Default::default() };
    let mut adam = AdamState::new(denoiser.params.len());
    let x = coords.to_f64();
    let d = spec.data_dim;
    let mut order: Vec<usize> = (0..n).collect();
    let shuffle_root = derive_seed(cfg.seed, "shuffle");
    let mut noise = seeded(derive_seed(cfg.seed, "noise"));
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut seeded(derive_index_seed(shuffle_root, epoch as u64)));
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<f64> = chunk.iter().flat_map(|&i| x[i * d..(i + 1) * d].iter().copied()).collect();
            let (loss, grad) = batch_loss(spec, &denoiser.params, sched, &batch, &mut noise, Mode::Train, 0)?;
            if !loss.is_finite() {
                return Err(Error::Optimization { iteration: step });
            }
            let grad = grad.expect("train mode returns a gradient");
            let (p, a) = adam_step(&denoiser.params, &grad, &adam, &adam_cfg, cfg.lr)?;
            denoiser.params = p;
            adam = a;
            sum += loss * chunk.len() as f64;
            count += chunk.len();
            step += 1;
        }
        history.push(sum / count as f64);
    }
    let final_loss = diffusion_loss(&denoiser, sched, coords, eval_seed)?;
    Ok(DiffusionTrained { denoiser, loss_history: history, initial_loss, final_loss })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub t: usize,
    pub mean: f64,
    pub var: f64,
}

/// Reverse-process output: `coords` is `x_0`, `trajectory` summarizes `x_t`
/// for `t = T..=1` (before each update) followed by `t = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRun {
    pub seed: u64,
    pub n: usize,
    pub coords: Tensor,
    pub trajectory: Vec<StepStats>,
}

#[derive(Serialize, Deserialize)]
struct SampleSidecar {
    seed: u64,
    n: usize,
    d: usize,
    schedule: ScheduleParams,
    denoiser: String,
    trajectory: Vec<StepStats>,
}

impl SampleRun {
    /// Coordinates as MGT1 plus a JSON sidecar naming the schedule and the
    /// denoiser they came from.
    pub fn save(
        &self,
        coords_path: &Path,
        sidecar_path: &Path,
        sched: &NoiseSchedule,
        denoiser_ref: &str,
    ) -> Result<()> {
        save_tensor(&self.coords, coords_path)?;
        let side = SampleSidecar {
            seed: self.seed,
            n: self.n,
            d: self.coords.row_len(),
            schedule: sched.params(),
            denoiser: denoiser_ref.to_string(),
            trajectory: self.trajectory.clone(),
        };
        let text = serde_json::to_string_pretty(&side).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(sidecar_path, text).map_err(|e| Error::io(sidecar_path, e))
    }
}

const CHAIN_BLOCK: usize = 64;

fn summarize(t: usize, x: &[f64]) -> StepStats {
    let n = x.len().max(1) as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    StepStats { t, mean, var }
}

/// Runs one block of chains from `x_T` down to `x_0`; returns the final
/// states and the state after every step.
fn run_block(
    model: &dyn NoisePredictor,
    sched: &NoiseSchedule,
    seed: u64,
    first_chain: usize,
    count: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let d = model.data_dim();
    let mut rngs: Vec<_> = (0..count).map(|c| seeded(derive_index_seed(seed, (first_chain + c) as u64))).collect();
    let mut x: Vec<f64> = rngs
        .iter_mut()
        .flat_map(|r| (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>())
        .collect();
    let mut states = vec![x.clone()];
    for t in (1..=sched.t_max).rev() {
        let eps = model.predict_noise(&x, t, sched)?;
        if eps.len() != x.len() {
            return Err(Error::shape("noise predictor", format!("returned {} values for {}", eps.len(), x.len())));
        }
        let (a, b, ab) = (sched.alpha(t), sched.beta(t), sched.alpha_bar(t));
        let coef = b / (1.0 - ab).sqrt();
        let sigma = b.sqrt();
        for (c, rng) in rngs.iter_mut().enumerate() {
            for j in 0..d {
                let k = c * d + j;
                let mut v = (x[k] - coef * eps[k]) / a.sqrt();
                if t > 1 {
                    v += sigma * rng.sample::<f64, _>(StandardNormal);
                }
                x[k] = v;
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Sampling { timestep: t });
        }
        states.push(x.clone());
    }
    Ok((x, states))
}

/// Ancestral sampling with `sigma_t^2 = beta_t` and no noise on the last
/// step. Chain `i` draws all of its noise from its own seed, so results do
/// not depend on how chains are grouped or scheduled.
pub fn ddpm_sample(model: &dyn NoisePredictor, sched: &NoiseSchedule, n: usize, seed: u64) -> Result<SampleRun> {
    let d = model.data_dim();
    let starts: Vec<usize> = (0..n).step_by(CHAIN_BLOCK).collect();
    let blocks: Vec<(Vec<f64>, Vec<Vec<f64>>)> = starts
        .par_iter()
        .map(|&s| run_block(model, sched, seed, s, CHAIN_BLOCK.min(n - s)))
        .collect::<Result<_>>()?;
    let mut coords = Vec::with_capacity(n * d);
    for (x, _) in &blocks {
        coords.extend_from_slice(x);
    }
    let trajectory = (0..=sched.t_max)
        .map(|step| {
            let all: Vec<f64> = blocks.iter().flat_map(|(_, s)| s[step].iter().copied()).collect();
            summarize(sched.t_max - step, &all)
        })
        .collect();
    Ok(SampleRun { seed, n, coords: Tensor::matrix_from_f64(n, d, &coords)?, trajectory })
}

/// Samples standardized coordinates, maps them back to the raw embedding
/// scale and decodes them.
pub fn generate_images(
    denoiser: &dyn NoisePredictor,
    sched: &NoiseSchedule,
    e: &Embedding,
    decoder: &Decoder,
    n: usize,
    seed: u64,
) -> Result<(ImageBatch, SampleRun)> {
    let stats = e
        .standardization
        .as_ref()
        .ok_or_else(|| Error::Config("embedding has no standardization statistics".into()))?;
    if denoiser.data_dim() != e.dim() || decoder.embed_dim() != e.dim() {
        return Err(Error::Config(format!(
            "embedding dim {} but denoiser takes {} and decoder {}",
            e.dim(),
            denoiser.data_dim(),
            decoder.embed_dim()
        )));
    }
    let run = ddpm_sample(denoiser, sched, n, seed)?;
    let raw = destandardize_coords(&run.coords, stats)?;
    Ok((decoder.decode(&raw)?, run))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;

    fn standard_schedule() -> NoiseSchedule {
        linear_schedule(1000, 1e-4, 0.02).unwrap()
    }

    #[test]
    fn schedule_examples() {
        let s = standard_schedule();
        assert_eq!(s.beta(1), 1e-4);
        assert_eq!(s.beta(1000), 0.02);
        assert!((s.beta(500) - (1e-4 + 499.0 / 999.0 * 0.0199)).abs() < 1e-15);
        assert!((s.beta(500) - 0.010040).abs() < 1e-6);
        assert!((s.alpha_bar(1) - 0.9999).abs() < 1e-15);
        assert!(s.alpha_bar(1000) < 5e-5);
    }

    #[test]
    fn schedule_rejects_bad_parameters() {
        for (t, a, b) in [(1, 1e-4, 0.02), (10, 0.02, 1e-4), (10, 0.0, 0.5), (10, 0.1, 1.0)] {
            assert!(matches!(linear_schedule(t, a, b), Err(Error::Parameter(_))));
        }
    }

    #[test]
    fn q_sample_trivial_cases() {
        let s = standard_schedule();
        let x0 = Tensor::new(vec![2, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let zero = Tensor::zeros(vec![2, 2]);
        let y = q_sample(&x0, 300, &zero, &s).unwrap();
        for (a, b) in y.data().iter().zip(x0.data()) {
            assert!((*a as f64 - s.alpha_bar(300).sqrt() * *b as f64).abs() < 1e-6);
        }
        let y = q_sample(&zero, 300, &x0, &s).unwrap();
        for (a, b) in y.data().iter().zip(x0.data()) {
            assert!((*a as f64 - (1.0 - s.alpha_bar(300)).sqrt() * *b as f64).abs() < 1e-6);
        }
        assert!(matches!(q_sample(&x0, 0, &zero, &s), Err(Error::Parameter(_))));
        assert!(matches!(q_sample(&x0, 1001, &zero, &s), Err(Error::Parameter(_))));
    }

    #[test]
    fn time_embedding_examples() {
        let e = time_embedding(0, 1000, 32).unwrap();
        for k in 0..16 {
            assert_eq!(e[2 * k], 0.0);
            assert_eq!(e[2 * k + 1], 1.0);
        }
        let all: Vec<Vec<f64>> = (1..=1000).map(|t| time_embedding(t, 1000, 32).unwrap()).collect();
        assert!(all.iter().flatten().all(|v| v.abs() <= 1.0));
        let mut min_gap = f64::INFINITY;
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                let g: f64 = all[i].iter().zip(&all[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                min_gap = min_gap.min(g);
            }
        }
        assert!(min_gap > 1e-6, "{min_gap}");
        assert!(matches!(time_embedding(1, 10, 31), Err(Error::Parameter(_))));
    }

    #[test]
    fn denoiser_widths() {
        let s = DenoiserSpec::standard(5).unwrap();
        assert_eq!(s.net.input_shape, vec![37]);
        assert_eq!(s.net.output_shape().unwrap(), vec![5]);
        assert_eq!(s.net.layers.iter().filter(|l| matches!(l, LayerSpec::ReLU)).count(), 3);
    }

    #[test]
    fn denoiser_gradient() {
        let spec = DenoiserSpec::new(2, &[8, 8, 8], 4).unwrap();
        let p = Parameters::init(&spec.net, 3).unwrap();
        let x = spec.inputs(&[0.3, -1.2, 0.8, 0.1, -0.5, 2.0], &[1, 500, 1000], 1000).unwrap();
        let loss = |y: &[f64]| {
            let n = y.len() as f64;
            (y.iter().map(|v| (v - 0.5).powi(2)).sum::<f64>() / n, y.iter().map(|v| 2.0 * (v - 0.5) / n).collect())
        };
        assert!(grad_check(&spec.net, &p, &x, &loss, 1e-6, 0).unwrap() < 1e-6);
    }

    struct Zero(usize);

    impl NoisePredictor for Zero {
        fn data_dim(&self) -> usize {
            self.0
        }
        fn predict_noise(&self, x: &[f64], _: usize, _: &NoiseSchedule) -> Result<Vec<f64>> {
            Ok(vec![0.0; x.len()])
        }
    }

    struct OriginOracle;

    impl NoisePredictor for OriginOracle {
        fn data_dim(&self) -> usize {
            2
        }
        fn predict_noise(&self, x: &[f64], t: usize, s: &NoiseSchedule) -> Result<Vec<f64>> {
            let k = 1.0 / (1.0 - s.alpha_bar(t)).sqrt();
            Ok(x.iter().map(|v| v * k).collect())
        }
    }

    #[test]
    fn oracle_denoiser_collapses_to_origin() {
        let run = ddpm_sample(&OriginOracle, &standard_schedule(), 1000, 4).unwrap();
        let x = run.coords.to_f64();
        let mean_norm = x.chunks(2).map(|r| (r[0] * r[0] + r[1] * r[1]).sqrt()).sum::<f64>() / 1000.0;
        assert!(mean_norm < 0.1, "{mean_norm}");
    }

    #[test]
    fn zero_denoiser_matches_variance_recursion() {
        let s = linear_schedule(200, 1e-4, 0.02).unwrap();
        let mut v = 1.0;
        for t in (1..=200).rev() {
            v /= s.alpha(t);
            if t > 1 {
                v += s.beta(t);
            }
        }
        let run = ddpm_sample(&Zero(2), &s, 10_000, 8).unwrap();
        let x = run.coords.to_f64();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / x.len() as f64;
        assert!(mean.abs() < 4.0 * (v / x.len() as f64).sqrt());
        assert!((var / v - 1.0).abs() < 0.05, "{var} vs {v}");
        assert_eq!(run.trajectory.len(), 201);
        assert_eq!(run.trajectory.last().unwrap().t, 0);
    }

    #[test]
    fn sampling_is_deterministic_and_chain_local() {
        let s = linear_schedule(50, 1e-4, 0.02).unwrap();
        let den = Denoiser::init(DenoiserSpec::new(3, &[16, 16, 16], 8).unwrap(), 1).unwrap();
        let a = ddpm_sample(&den, &s, 100, 5).unwrap();
        let b = ddpm_sample(&den, &s, 100, 5).unwrap();
        assert_eq!(a, b);
        // the first chains do not depend on how many chains run beside them
        let c = ddpm_sample(&den, &s, 10, 5).unwrap();
        assert_eq!(&a.coords.data()[..30], c.coords.data());
    }

    #[test]
    fn last_step_adds_no_noise() {
        struct Probe;
        impl NoisePredictor for Probe {
            fn data_dim(&self) -> usize {
                1
            }
            fn predict_noise(&self, x: &[f64], _: usize, _: &NoiseSchedule) -> Result<Vec<f64>> {
                Ok(x.iter().map(|v| 0.5 * v).collect())
            }
        }
        let s = linear_schedule(2, 0.1, 0.2).unwrap();
        let run = ddpm_sample(&Probe, &s, 3, 9).unwrap();
        // recompute step t = 1 from the recorded trajectory of a single chain
        let one = ddpm_sample(&Probe, &s, 1, 9).unwrap();
        let x1 = one.trajectory[1].mean;
        let coef = s.beta(1) / (1.0 - s.alpha_bar(1)).sqrt();
        let expect = (x1 - coef * 0.5 * x1) / s.alpha(1).sqrt();
        assert!((one.coords.data()[0] as f64 - expect).abs() < 1e-6);
        assert_eq!(run.coords.data()[0], one.coords.data()[0]);
    }

    #[test]
    fn sampling_nan_is_reported_with_timestep() {
        struct Bad;
        impl NoisePredictor for Bad {
            fn data_dim(&self) -> usize {
                1
            }
            fn predict_noise(&self, x: &[f64], t: usize, _: &NoiseSchedule) -> Result<Vec<f64>> {
                Ok(x.iter().map(|_| if t == 7 { f64::NAN } else { 0.0 }).collect())
            }
        }
        let err = ddpm_sample(&Bad, &linear_schedule(10, 1e-4, 0.02).unwrap(), 4, 0).unwrap_err();
        assert!(matches!(err, Error::Sampling { timestep: 7 }));
    }

    pub(crate) fn two_mode_mixture(n: usize, seed: u64) -> Tensor {
        let mut rng = seeded(seed);
        let mut x = Vec::with_capacity(2 * n);
        for i in 0..n {
            let c = if i % 2 == 0 { 1.0 } else { -1.0 };
            x.push(c + 0.1 * rng.sample::<f64, _>(StandardNormal));
            x.push(c * 0.5 + 0.1 * rng.sample::<f64, _>(StandardNormal));
        }
        let t = Tensor::matrix_from_f64(n, 2, &x).unwrap();
        let e = Embedding {
            method: crate::nldr::Method::Isomap,
            coords: t,
            hyper: Default::default(),
            standardization: None,
            diagnostics: Default::default(),
        };
        crate::nldr::standardize_embedding(&e).unwrap().coords
    }

    #[test]
    fn unstandardized_input_is_config_error() {
        let x = Tensor::matrix_from_f64(100, 1, &(0..100).map(|i| i as f64).collect::<Vec<_>>()).unwrap();
        let spec = DenoiserSpec::new(1, &[8], 4).unwrap();
        let r = train_diffusion(&x, &spec, &standard_schedule(), &DiffusionConfig::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn initial_loss_near_one_and_training_is_deterministic() {
        let x = two_mode_mixture(256, 1);
        let spec = DenoiserSpec::standard(2).unwrap();
        let cfg = DiffusionConfig { epochs: 2, seed: 3, ..Default::default() };
        let a = train_diffusion(&x, &spec, &standard_schedule(), &cfg).unwrap();
        assert!((0.8..=1.5).contains(&a.initial_loss), "{}", a.initial_loss);
        let b = train_diffusion(&x, &spec, &standard_schedule(), &cfg).unwrap();
        let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.loss_history), bits(&b.loss_history));
    }

    #[test]
    fn checkpoint_round_trip() {
        let s = linear_schedule(20, 1e-3, 0.05).unwrap();
        let d = Denoiser::init(DenoiserSpec::new(3, &[4, 4], 2).unwrap(), 1).unwrap();
        let bytes = d.to_checkpoint(&s).to_bytes().unwrap();
        let (back, s2) = Denoiser::from_checkpoint(Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, d);
        assert_eq!(s2, s);
    }
}
