use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { m: Tensor::zeros(vec![len]), v: Tensor::zeros(vec![len]), step: 0 }
    }
}

/// One bias-corrected Adam step with decoupled weight decay: parameters
/// are first shrunk by `1 - lr * weight_decay`, then moved by the adaptive
/// step. Returns the new parameters and optimizer state.
pub fn adam_step(
    params: &Parameters,
    grads: &Tensor,
    state: &AdamState,
    cfg: &AdamConfig,
    lr: f64,
) -> Result<(Parameters, AdamState)> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::shape(
            "adam_step",
            format!("params {n}, grads {}, state {}", grads.len(), state.m.len()),
        ));
    }
    let step = state.step + 1;
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    let decay = 1.0 - lr * cfg.weight_decay;
    let mut p = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for k in 0..n {
        let g = grads.data()[k] as f64;
        let mk = cfg.beta1 * state.m.data()[k] as f64 + (1.0 - cfg.beta1) * g;
        let vk = cfg.beta2 * state.v.data()[k] as f64 + (1.0 - cfg.beta2) * g * g;
        let mhat = mk / bc1;
        let vhat = vk / bc2;
        let pk = params.flat.data()[k] as f64 * decay - lr * mhat / (vhat.sqrt() + cfg.eps);
        p.push(pk as f32);
        m.push(mk as f32);
        v.push(vk as f32);
    }
    let mut out = params.clone();
    out.flat = Tensor::new(vec![n], p)?;
    Ok((out, AdamState { m: Tensor::new(vec![n], m)?, v: Tensor::new(vec![n], v)?, step }))
}

/// `lr_min + (lr_max - lr_min) (1 + cos(pi t / T)) / 2`.
pub fn cosine_lr(t: usize, total: usize, lr_max: f64, lr_min: f64) -> f64 {
    let total = total.max(1);
    let t = t.min(total);
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * t as f64 / total as f64).cos())
}
