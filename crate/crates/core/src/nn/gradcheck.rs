use super::engine::{backward_with, forward_with};
use super::{Mode, NetworkSpec, Parameters};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Largest relative disagreement between backpropagated gradients and
/// central differences, over every parameter and every input element.
///
/// Runs in `f64` in train mode with a fixed `seed`, so dropout masks stay
/// put across probes. Relative error is
/// `|fd - bp| / max(|fd|, |bp|, 1e-2 * max|bp|)`, which keeps entries whose
/// true gradient is near zero from dominating.
pub fn grad_check(
    net: &NetworkSpec,
    params: &Parameters,
    x: &Tensor,
    loss: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
    eps: f64,
    seed: u64,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    params.check(net)?;
    let batch = x.shape().first().copied().unwrap_or(0);
    let w: Vec<f64> = params.flat.to_f64();
    let xs: Vec<f64> = x.to_f64();
    let eval = |w: &[f64], xs: &[f64]| -> Result<f64> {
        let (y, _) = forward_with(net, w, &params.running, xs, batch, Mode::Train, seed)?;
        Ok(loss(&y).0)
    };
    let (y, tape) = forward_with(net, &w, &params.running, &xs, batch, Mode::Train, seed)?;
    let (_, dy) = loss(&y);
    let (dw, dx) = backward_with(net, &w, &tape, &dy)?;
    let scale = dw.iter().chain(&dx).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-2 * scale).max(1e-12);
    let mut worst = 0.0f64;
    let mut probe = |analytic: f64, plus: f64, minus: f64| {
        let fd = (plus - minus) / (2.0 * eps);
        let err = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(floor);
        worst = worst.max(err);
    };
    let mut wp = w.clone();
    for k in 0..w.len() {
        wp[k] = w[k] + eps;
        let plus = eval(&wp, &xs)?;
        wp[k] = w[k] - eps;
        let minus = eval(&wp, &xs)?;
        wp[k] = w[k];
        probe(dw[k], plus, minus);
    }
    let mut xp = xs.clone();
    for k in 0..xs.len() {
        xp[k] = xs[k] + eps;
        let plus = eval(&w, &xp)?;
        xp[k] = xs[k] - eps;
        let minus = eval(&w, &xp)?;
        xp[k] = xs[k];
        probe(dx[k], plus, minus);
    }
    Ok(worst)
}
