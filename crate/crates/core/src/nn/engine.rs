use rand::Rng as _;

use super::ops::{conv_t_geom, conv_t_sample, ConvGeom};
use super::real::Real;
use super::{LayerSpec, Mode, NetworkSpec, Parameters, RunningStats};
use crate::error::{Error, Result};
use crate::rng::{derive_index_seed, seeded};
use crate::tensor::Tensor;

enum Cache<R> {
    None,
    Mask(Vec<R>),
    Argmax(Vec<u32>),
    Norm { xhat: Vec<R>, inv_std: Vec<f64> },
    Output(Vec<R>),
}

/// Activation record of one forward pass.
pub struct Tape<R> {
    batch: usize,
    inputs: Vec<Vec<R>>,
    caches: Vec<Cache<R>>,
    stats: Vec<(usize, Vec<f64>, Vec<f64>, usize)>,
}

impl<R> Tape<R> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// `(layer, mean, population variance, element count)` for every
    /// batch-norm layer run in train mode.
    pub fn batch_stats(&self) -> &[(usize, Vec<f64>, Vec<f64>, usize)] {
        &self.stats
    }
}

fn channel_split(shape: &[usize]) -> (usize, usize) {
    (shape[0], shape[1..].iter().product())
}

/// Forward pass in any [`Real`] precision. `weights` is the flat parameter
/// vector, `x` holds `batch` samples of `net.input_shape`.
#[allow(clippy::too_many_arguments)]
pub fn forward_with<R: Real>(
    net: &NetworkSpec,
    weights: &[R],
    running: &[RunningStats],
    x: &[R],
    batch: usize,
    mode: Mode,
    seed: u64,
) -> Result<(Vec<R>, Tape<R>)> {
    run_forward(net, weights, running, x, batch, mode, seed, true)
}

#[allow(clippy::too_many_arguments)]
fn run_forward<R: Real>(
    net: &NetworkSpec,
    weights: &[R],
    running: &[RunningStats],
    x: &[R],
    batch: usize,
    mode: Mode,
    seed: u64,
    keep: bool,
) -> Result<(Vec<R>, Tape<R>)> {
    let shapes = net.shapes()?;
    if weights.len() != net.param_count() {
        return Err(Error::shape(
            "forward",
            format!("{} parameters for a network of {}", weights.len(), net.param_count()),
        ));
    }
    let in_len: usize = shapes[0].iter().product();
    if x.len() != batch * in_len {
        return Err(Error::shape("forward", format!("input length {} != {batch} x {in_len}", x.len())));
    }
    let offsets = net.param_offsets();
    let mut tape = Tape { batch, inputs: Vec::new(), caches: Vec::new(), stats: Vec::new() };
    let mut cur = x.to_vec();
    for (i, layer) in net.layers.iter().enumerate() {
        let (ins, outs) = (&shapes[i], &shapes[i + 1]);
        let in_n: usize = ins.iter().product();
        let out_n: usize = outs.iter().product();
        let w = &weights[offsets[i]..];
        let mut cache = Cache::None;
        let next = match *layer {
            LayerSpec::Dense { inputs: ni, outputs: no } => {
                let mut y = vec![R::zero(); batch * no];
                R::gemm(batch, ni, no, &cur, (ni as isize, 1), w, (1, ni as isize), R::zero(), &mut y, (no as isize, 1));
                let bias = &w[no * ni..no * ni + no];
                for row in y.chunks_mut(no) {
                    for (v, b) in row.iter_mut().zip(bias) {
                        *v += *b;
                    }
                }
                y
            }
            LayerSpec::Conv2D { in_channels, out_channels, kernel, stride, padding } => {
                let g = ConvGeom::conv(in_channels, ins[1], ins[2], kernel, stride, padding);
                let (kk, p) = (g.col_rows(), g.col_cols());
                let mut col = vec![R::zero(); kk * p];
                let mut y = vec![R::zero(); batch * out_n];
                let bias = &w[out_channels * kk..out_channels * kk + out_channels];
                for s in 0..batch {
                    g.im2col(&cur[s * in_n..(s + 1) * in_n], &mut col);
                    let ys = &mut y[s * out_n..(s + 1) * out_n];
                    R::gemm(out_channels, kk, p, w, (kk as isize, 1), &col, (p as isize, 1), R::zero(), ys, (p as isize, 1));
                    for (c, b) in bias.iter().enumerate() {
                        ys[c * p..(c + 1) * p].iter_mut().for_each(|v| *v += *b);
                    }
                }
                y
            }
            LayerSpec::ConvTranspose2D { in_channels, out_channels, kernel, stride, padding, output_padding } => {
                let g = conv_t_geom(out_channels, ins[1], ins[2], kernel, stride, padding, output_padding);
                let kk = g.col_rows();
                let mut col = vec![R::zero(); kk * g.col_cols()];
                let mut y = vec![R::zero(); batch * out_n];
                let wl = in_channels * kk;
                let bias = &w[wl..wl + out_channels];
                let plane = g.height * g.width;
                for s in 0..batch {
                    let ys = &mut y[s * out_n..(s + 1) * out_n];
                    conv_t_sample(&g, in_channels, &w[..wl], &cur[s * in_n..(s + 1) * in_n], &mut col, ys);
                    for (c, b) in bias.iter().enumerate() {
                        ys[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v += *b);
                    }
                }
                y
            }
            LayerSpec::MaxPool2x2 => {
                let (c, h, wd) = (ins[0], ins[1], ins[2]);
                let (oh, ow) = (h / 2, wd / 2);
                let mut y = vec![R::zero(); batch * out_n];
                let mut arg = vec![0u32; batch * out_n];
                for s in 0..batch {
                    for ch in 0..c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let base = s * in_n + (ch * h + 2 * oy) * wd + 2 * ox;
                                let mut best = base;
                                for idx in [base + 1, base + wd, base + wd + 1] {
                                    if cur[idx] > cur[best] {
                                        best = idx;
                                    }
                                }
                                let o = s * out_n + (ch * oh + oy) * ow + ox;
                                y[o] = cur[best];
                                arg[o] = best as u32;
                            }
                        }
                    }
                }
                cache = Cache::Argmax(arg);
                y
            }
            LayerSpec::BatchNorm { channels, eps, .. } => {
                let (c, sp) = channel_split(ins);
                let (gamma, beta) = (&w[..channels], &w[channels..2 * channels]);
                let (mean, var) = match mode {
                    Mode::Train => {
                        if batch < 2 {
                            return Err(Error::Parameter(format!(
                                "layer {i} (BatchNorm) needs a batch of at least 2 in train mode"
                            )));
                        }
                        let count = (batch * sp) as f64;
                        let mut mean = vec![0.0f64; c];
                        let mut var = vec![0.0f64; c];
                        for s in 0..batch {
                            for ch in 0..c {
                                let o = s * in_n + ch * sp;
                                mean[ch] += cur[o..o + sp].iter().map(|v| v.f64()).sum::<f64>();
                            }
                        }
                        mean.iter_mut().for_each(|m| *m /= count);
                        for s in 0..batch {
                            for ch in 0..c {
                                let o = s * in_n + ch * sp;
                                var[ch] += cur[o..o + sp].iter().map(|v| (v.f64() - mean[ch]).powi(2)).sum::<f64>();
                            }
                        }
                        var.iter_mut().for_each(|v| *v /= count);
                        tape.stats.push((i, mean.clone(), var.clone(), batch * sp));
                        (mean, var)
                    }
                    Mode::Eval => {
                        let rs = running
                            .iter()
                            .find(|r| r.layer == i)
                            .ok_or_else(|| Error::shape(format!("layer {i} (BatchNorm)"), "missing running statistics"))?;
                        (rs.mean.to_f64(), rs.var.to_f64())
                    }
                };
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
                let mut xhat = vec![R::zero(); cur.len()];
                let mut y = vec![R::zero(); cur.len()];
                for s in 0..batch {
                    for ch in 0..c {
                        let o = s * in_n + ch * sp;
                        for k in o..o + sp {
                            let xh = R::of((cur[k].f64() - mean[ch]) * inv_std[ch]);
                            xhat[k] = xh;
                            y[k] = gamma[ch] * xh + beta[ch];
                        }
                    }
                }
                if keep {
                    cache = Cache::Norm { xhat, inv_std };
                }
                y
            }
            LayerSpec::ReLU => cur.iter().map(|&v| if v > R::zero() { v } else { R::zero() }).collect(),
            LayerSpec::LeakyReLU { slope } => {
                let a = R::of(slope);
                cur.iter().map(|&v| if v > R::zero() { v } else { a * v }).collect()
            }
            LayerSpec::Tanh => {
                let y: Vec<R> = cur.iter().map(|v| v.tanh()).collect();
                if keep {
                    cache = Cache::Output(y.clone());
                }
                y
            }
            LayerSpec::Dropout { p } => match mode {
                Mode::Train => {
                    let mut rng = seeded(derive_index_seed(seed, i as u64));
                    let keep_scale = R::of(1.0 / (1.0 - p));
                    let mask: Vec<R> = (0..cur.len())
                        .map(|_| if rng.random::<f64>() < p { R::zero() } else { keep_scale })
                        .collect();
                    let y = cur.iter().zip(&mask).map(|(a, m)| *a * *m).collect();
                    cache = Cache::Mask(mask);
                    y
                }
                Mode::Eval => cur.clone(),
            },
            LayerSpec::Reshape { .. } => cur.clone(),
        };
        debug_assert_eq!(next.len(), batch * out_n);
        if keep {
            tape.inputs.push(std::mem::replace(&mut cur, next));
            tape.caches.push(cache);
        } else {
            cur = next;
        }
    }
    Ok((cur, tape))
}

/// Backward pass matching [`forward_with`]: returns the gradient with
/// respect to every parameter and to the input.
pub fn backward_with<R: Real>(net: &NetworkSpec, weights: &[R], tape: &Tape<R>, dy: &[R]) -> Result<(Vec<R>, Vec<R>)> {
    let shapes = net.shapes()?;
    let batch = tape.batch;
    if tape.inputs.len() != net.layers.len() {
        return Err(Error::shape("backward", "tape does not belong to this network"));
    }
    let out_len: usize = shapes.last().unwrap().iter().product();
    if dy.len() != batch * out_len {
        return Err(Error::shape("backward", format!("output gradient length {} != {batch} x {out_len}", dy.len())));
    }
    let offsets = net.param_offsets();
    let mut grads = vec![R::zero(); weights.len()];
    let mut g = dy.to_vec();
    for (i, layer) in net.layers.iter().enumerate().rev() {
        let (ins, outs) = (&shapes[i], &shapes[i + 1]);
        let in_n: usize = ins.iter().product();
        let out_n: usize = outs.iter().product();
        let x = &tape.inputs[i];
        let w = &weights[offsets[i]..];
        let dw = &mut grads[offsets[i]..];
        let dx = match *layer {
            LayerSpec::Dense { inputs: ni, outputs: no } => {
                R::gemm(no, batch, ni, &g, (1, no as isize), x, (ni as isize, 1), R::one(), &mut dw[..no * ni], (ni as isize, 1));
                for row in g.chunks(no) {
                    for (d, v) in dw[no * ni..no * ni + no].iter_mut().zip(row) {
                        *d += *v;
                    }
                }
                let mut dx = vec![R::zero(); batch * ni];
                R::gemm(batch, no, ni, &g, (no as isize, 1), w, (ni as isize, 1), R::zero(), &mut dx, (ni as isize, 1));
                dx
            }
            LayerSpec::Conv2D { in_channels, out_channels, kernel, stride, padding } => {
                let gm = ConvGeom::conv(in_channels, ins[1], ins[2], kernel, stride, padding);
                let (kk, p) = (gm.col_rows(), gm.col_cols());
                let mut col = vec![R::zero(); kk * p];
                let mut dcol = vec![R::zero(); kk * p];
                let mut dx = vec![R::zero(); batch * in_n];
                let wl = out_channels * kk;
                for s in 0..batch {
                    let gs = &g[s * out_n..(s + 1) * out_n];
                    gm.im2col(&x[s * in_n..(s + 1) * in_n], &mut col);
                    R::gemm(out_channels, p, kk, gs, (p as isize, 1), &col, (1, p as isize), R::one(), &mut dw[..wl], (kk as isize, 1));
                    R::gemm(kk, out_channels, p, w, (1, kk as isize), gs, (p as isize, 1), R::zero(), &mut dcol, (p as isize, 1));
                    gm.col2im(&dcol, &mut dx[s * in_n..(s + 1) * in_n]);
                    for c in 0..out_channels {
                        dw[wl + c] += gs[c * p..(c + 1) * p].iter().fold(R::zero(), |a, v| a + *v);
                    }
                }
                dx
            }
            LayerSpec::ConvTranspose2D { in_channels, out_channels, kernel, stride, padding, output_padding } => {
                let gm = conv_t_geom(out_channels, ins[1], ins[2], kernel, stride, padding, output_padding);
                let (kk, pin) = (gm.col_rows(), gm.col_cols());
                let plane = gm.height * gm.width;
                let mut col = vec![R::zero(); kk * pin];
                let mut dx = vec![R::zero(); batch * in_n];
                let wl = in_channels * kk;
                for s in 0..batch {
                    let gs = &g[s * out_n..(s + 1) * out_n];
                    gm.im2col(gs, &mut col);
                    R::gemm(in_channels, kk, pin, w, (kk as isize, 1), &col, (pin as isize, 1), R::zero(), &mut dx[s * in_n..(s + 1) * in_n], (pin as isize, 1));
                    R::gemm(in_channels, pin, kk, &x[s * in_n..(s + 1) * in_n], (pin as isize, 1), &col, (1, pin as isize), R::one(), &mut dw[..wl], (kk as isize, 1));
                    for c in 0..out_channels {
                        dw[wl + c] += gs[c * plane..(c + 1) * plane].iter().fold(R::zero(), |a, v| a + *v);
                    }
                }
                dx
            }
            LayerSpec::MaxPool2x2 => {
                let Cache::Argmax(arg) = &tape.caches[i] else {
                    return Err(Error::shape(format!("layer {i} (MaxPool2x2)"), "tape cache missing"));
                };
                let mut dx = vec![R::zero(); batch * in_n];
                for (o, &a) in arg.iter().enumerate() {
                    dx[a as usize] += g[o];
                }
                dx
            }
            LayerSpec::BatchNorm { channels, .. } => {
                let Cache::Norm { xhat, inv_std } = &tape.caches[i] else {
                    return Err(Error::shape(format!("layer {i} (BatchNorm)"), "tape cache missing"));
                };
                let (c, sp) = channel_split(ins);
                let gamma = &w[..channels];
                let mut sdy = vec![0.0f64; c];
                let mut sdyx = vec![0.0f64; c];
                for s in 0..batch {
                    for ch in 0..c {
                        let o = s * in_n + ch * sp;
                        for k in o..o + sp {
                            sdy[ch] += g[k].f64();
                            sdyx[ch] += g[k].f64() * xhat[k].f64();
                        }
                    }
                }
                for ch in 0..c {
                    dw[ch] += R::of(sdyx[ch]);
                    dw[channels + ch] += R::of(sdy[ch]);
                }
                let train = tape.stats.iter().any(|st| st.0 == i);
                let n = (batch * sp) as f64;
                let mut dx = vec![R::zero(); batch * in_n];
                for s in 0..batch {
                    for ch in 0..c {
                        let o = s * in_n + ch * sp;
                        let gi = gamma[ch].f64() * inv_std[ch];
                        for k in o..o + sp {
                            let v = if train {
                                gi * (g[k].f64() - sdy[ch] / n - xhat[k].f64() * sdyx[ch] / n)
                            } else {
                                gi * g[k].f64()
                            };
                            dx[k] = R::of(v);
                        }
                    }
                }
                dx
            }
            LayerSpec::ReLU => g.iter().zip(x).map(|(d, v)| if *v > R::zero() { *d } else { R::zero() }).collect(),
            LayerSpec::LeakyReLU { slope } => {
                let a = R::of(slope);
                g.iter().zip(x).map(|(d, v)| if *v > R::zero() { *d } else { a * *d }).collect()
            }
            LayerSpec::Tanh => {
                let Cache::Output(y) = &tape.caches[i] else {
                    return Err(Error::shape(format!("layer {i} (Tanh)"), "tape cache missing"));
                };
                g.iter().zip(y).map(|(d, y)| *d * (R::one() - *y * *y)).collect()
            }
            LayerSpec::Dropout { .. } => match &tape.caches[i] {
                Cache::Mask(m) => g.iter().zip(m).map(|(d, m)| *d * *m).collect(),
                _ => g.clone(),
            },
            LayerSpec::Reshape { .. } => g.clone(),
        };
        g = dx;
    }
    Ok((grads, g))
}

fn check_input(net: &NetworkSpec, x: &Tensor) -> Result<usize> {
    if x.rank() != net.input_shape.len() + 1 || x.shape()[1..] != net.input_shape[..] {
        return Err(Error::shape(
            "network input",
            format!("expected [b, {:?}], got {:?}", net.input_shape, x.shape()),
        ));
    }
    Ok(x.shape()[0])
}

fn batch_tensor(net: &NetworkSpec, batch: usize, data: Vec<f32>) -> Result<Tensor> {
    let mut shape = vec![batch];
    shape.extend(net.output_shape()?);
    Tensor::new(shape, data)
}

/// Forward pass on `f32` parameters. `seed` drives train-mode dropout.
pub fn forward(net: &NetworkSpec, params: &Parameters, x: &Tensor, mode: Mode, seed: u64) -> Result<(Tensor, Tape<f32>)> {
    params.check(net)?;
    let batch = check_input(net, x)?;
    let (y, tape) = forward_with(net, params.flat.data(), &params.running, x.data(), batch, mode, seed)?;
    Ok((batch_tensor(net, batch, y)?, tape))
}

/// Eval-mode forward pass without keeping an activation record.
pub fn predict(net: &NetworkSpec, params: &Parameters, x: &Tensor) -> Result<Tensor> {
    params.check(net)?;
    let batch = check_input(net, x)?;
    let (y, _) = run_forward(net, params.flat.data(), &params.running, x.data(), batch, Mode::Eval, 0, false)?;
    batch_tensor(net, batch, y)
}

/// Gradients of the scalar whose output gradient is `dy`:
/// `(dparams [p], dx shaped like the input)`.
pub fn backward(net: &NetworkSpec, params: &Parameters, tape: &Tape<f32>, dy: &Tensor) -> Result<(Tensor, Tensor)> {
    let (dp, dx) = backward_with(net, params.flat.data(), tape, dy.data())?;
    let mut shape = vec![tape.batch];
    shape.extend(&net.input_shape);
    Ok((Tensor::new(vec![dp.len()], dp)?, Tensor::new(shape, dx)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(input: Vec<usize>, layers: Vec<LayerSpec>) -> (NetworkSpec, Parameters) {
        let spec = NetworkSpec::new(input, layers).unwrap();
        let p = Parameters::init(&spec, 7).unwrap();
        (spec, p)
    }

    #[test]
    fn empty_network_is_identity() {
        let (spec, p) = net(vec![3], vec![]);
        let x = Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap();
        assert_eq!(forward(&spec, &p, &x, Mode::Train, 0).unwrap().0, x);
    }

    #[test]
    fn tanh_layer_range() {
        let (spec, p) = net(vec![3], vec![LayerSpec::Tanh]);
        let x = Tensor::new(vec![1, 3], vec![0.0, 50.0, -3.0]).unwrap();
        let y = predict(&spec, &p, &x).unwrap();
        assert_eq!(y.data()[0], 0.0);
        assert!(y.data().iter().all(|v| v.abs() <= 1.0));
        assert!(y.data()[2] > -1.0);
    }

    #[test]
    fn identity_dense_layer() {
        let (spec, mut p) = net(vec![2], vec![LayerSpec::dense(2, 2)]);
        p.flat = Tensor::new(vec![6], vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let x = Tensor::new(vec![2, 2], vec![0.3, -1.2, 4.0, 5.0]).unwrap();
        assert_eq!(predict(&spec, &p, &x).unwrap(), x);
    }

    #[test]
    fn relu_gradient_is_piecewise() {
        let (spec, p) = net(vec![2], vec![LayerSpec::ReLU]);
        let x = Tensor::new(vec![1, 2], vec![-1.0, 1.0]).unwrap();
        let (_, tape) = forward(&spec, &p, &x, Mode::Train, 0).unwrap();
        let dy = Tensor::new(vec![1, 2], vec![0.7, 0.7]).unwrap();
        let (_, dx) = backward(&spec, &p, &tape, &dy).unwrap();
        assert_eq!(dx.data(), &[0.0, 0.7]);
    }

    #[test]
    fn dense_weight_gradient_is_outer_product_sum() {
        let (spec, p) = net(vec![2], vec![LayerSpec::dense(2, 3)]);
        let x = Tensor::new(vec![2, 2], vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let dy = Tensor::new(vec![2, 3], vec![1.0, 0.0, 2.0, 3.0, -1.0, 1.0]).unwrap();
        let (_, tape) = forward(&spec, &p, &x, Mode::Train, 0).unwrap();
        let (dp, _) = backward(&spec, &p, &tape, &dy).unwrap();
        for o in 0..3 {
            for i in 0..2 {
                let want: f32 = (0..2).map(|s| dy.data()[s * 3 + o] * x.data()[s * 2 + i]).sum();
                assert_eq!(dp.data()[o * 2 + i], want);
            }
            let db: f32 = (0..2).map(|s| dy.data()[s * 3 + o]).sum();
            assert_eq!(dp.data()[6 + o], db);
        }
    }

    #[test]
    fn batchnorm_train_normalizes_each_channel() {
        let (spec, p) = net(vec![3, 2, 2], vec![LayerSpec::batch_norm(3)]);
        let data: Vec<f32> = (0..5 * 12).map(|v| ((v * 37) % 11) as f32 * 0.7 - 2.0).collect();
        let x = Tensor::new(vec![5, 3, 2, 2], data).unwrap();
        let (y, _) = forward(&spec, &p, &x, Mode::Train, 0).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = (0..5)
                .flat_map(|s| (0..4).map(move |k| s * 12 + c * 4 + k))
                .map(|k| y.data()[k] as f64)
                .collect();
            let m = vals.iter().sum::<f64>() / 20.0;
            let v = vals.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 20.0;
            assert!(m.abs() < 1e-6, "{m}");
            assert!((v - 1.0).abs() < 1e-4, "{v}");
        }
    }

    #[test]
    fn batchnorm_constant_channel_maps_to_zero() {
        let (spec, p) = net(vec![2], vec![LayerSpec::batch_norm(2)]);
        let x = Tensor::new(vec![3, 2], vec![4.0, 1.0, 4.0, 2.0, 4.0, 3.0]).unwrap();
        let (y, _) = forward(&spec, &p, &x, Mode::Train, 0).unwrap();
        assert_eq!([y.data()[0], y.data()[2], y.data()[4]], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn batchnorm_single_sample_train_is_error() {
        let (spec, p) = net(vec![2], vec![LayerSpec::batch_norm(2)]);
        let x = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(forward(&spec, &p, &x, Mode::Train, 0), Err(Error::Parameter(_))));
        assert!(forward(&spec, &p, &x, Mode::Eval, 0).is_ok());
    }

    #[test]
    fn eval_after_training_matches_train_statistics() {
        use crate::rng::seeded;
        use rand_distr::{Distribution, Normal};
        let (spec, mut p) = net(vec![4], vec![LayerSpec::batch_norm(4)]);
        let dist = Normal::new(3.0, 2.0).unwrap();
        let mut rng = seeded(1);
        let mut draw = |n: usize| {
            Tensor::new(vec![n, 4], (0..n * 4).map(|_| dist.sample(&mut rng) as f32).collect()).unwrap()
        };
        for _ in 0..200 {
            let (_, tape) = forward(&spec, &p, &draw(256), Mode::Train, 0).unwrap();
            p.update_running_stats(&spec, &tape).unwrap();
        }
        let x = draw(4000);
        let (yt, _) = forward(&spec, &p, &x, Mode::Train, 0).unwrap();
        let ye = predict(&spec, &p, &x).unwrap();
        for c in 0..4 {
            let stats = |t: &Tensor| {
                let v: Vec<f64> = (0..4000).map(|s| t.data()[s * 4 + c] as f64).collect();
                let m = v.iter().sum::<f64>() / 4000.0;
                (m, (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 4000.0).sqrt())
            };
            let (mt, st) = stats(&yt);
            let (me, se) = stats(&ye);
            assert!((mt - me).abs() < 0.05, "mean {mt} vs {me}");
            assert!((st / se - 1.0).abs() < 0.05, "sd {st} vs {se}");
        }
    }

    #[test]
    fn dropout_is_seeded_and_inverted() {
        let (spec, p) = net(vec![1000], vec![LayerSpec::Dropout { p: 0.25 }]);
        let x = Tensor::new(vec![2, 1000], vec![1.0; 2000]).unwrap();
        let (a, _) = forward(&spec, &p, &x, Mode::Train, 5).unwrap();
        let (b, _) = forward(&spec, &p, &x, Mode::Train, 5).unwrap();
        let (c, _) = forward(&spec, &p, &x, Mode::Train, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.data().iter().all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-6));
        assert_eq!(predict(&spec, &p, &x).unwrap(), x);
    }

    #[test]
    fn eval_is_batch_independent() {
        let (spec, mut p) = net(
            vec![3],
            vec![
                LayerSpec::dense(3, 2 * 4 * 4),
                LayerSpec::Reshape { shape: vec![2, 4, 4] },
                LayerSpec::batch_norm(2),
                LayerSpec::leaky_relu(),
                LayerSpec::conv(2, 3, 3, 1, 1),
                LayerSpec::MaxPool2x2,
                LayerSpec::conv_t(3, 2, 4, 2, 1, 0),
                LayerSpec::Tanh,
            ],
        );
        let data: Vec<f32> = (0..7 * 3).map(|v| (v as f32 * 0.37).sin()).collect();
        let x = Tensor::new(vec![7, 3], data).unwrap();
        let (_, tape) = forward(&spec, &p, &x, Mode::Train, 0).unwrap();
        p.update_running_stats(&spec, &tape).unwrap();
        let all = predict(&spec, &p, &x).unwrap();
        let per = all.row_len();
        for s in 0..7 {
            let one = predict(&spec, &p, &x.select_rows(&[s])).unwrap();
            assert_eq!(one.data(), &all.data()[s * per..(s + 1) * per]);
        }
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax() {
        let (spec, p) = net(vec![1, 2, 2], vec![LayerSpec::MaxPool2x2]);
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 5.0, 3.0, 2.0]).unwrap();
        let (y, tape) = forward(&spec, &p, &x, Mode::Train, 0).unwrap();
        assert_eq!(y.data(), &[5.0]);
        let (_, dx) = backward(&spec, &p, &tape, &Tensor::new(vec![1, 1, 1, 1], vec![2.0]).unwrap()).unwrap();
        assert_eq!(dx.data(), &[0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn input_shape_mismatch_is_shape_error() {
        let (spec, p) = net(vec![3], vec![LayerSpec::dense(3, 1)]);
        let x = Tensor::zeros(vec![2, 4]);
        assert!(matches!(forward(&spec, &p, &x, Mode::Eval, 0), Err(Error::Shape { .. })));
    }
}
