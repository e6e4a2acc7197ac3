//! A small CPU neural-network engine: declarative layer lists, flat
//! parameter storage, explicit forward/backward passes, Adam.

mod checkpoint;
mod engine;
mod gradcheck;
mod ops;
mod optim;
mod real;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_index_seed, seeded};
use crate::tensor::Tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use engine::{backward, backward_with, forward, forward_with, predict, Tape};
pub use gradcheck::grad_check;
pub use ops::{conv_transpose2d_forward, ConvGeom};
pub use optim::{adam_step, cosine_lr, AdamConfig, AdamState};
pub use real::Real;

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerSpec {
    #[serde(rename = "dense")]
    Dense { inputs: usize, outputs: usize },
    #[serde(rename = "conv2d")]
    Conv2D {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    #[serde(rename = "conv_transpose2d")]
    ConvTranspose2D {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    },
    #[serde(rename = "max_pool2x2")]
    MaxPool2x2,
    #[serde(rename = "batch_norm")]
    BatchNorm { channels: usize, momentum: f64, eps: f64 },
    #[serde(rename = "relu")]
    ReLU,
    #[serde(rename = "leaky_relu")]
    LeakyReLU { slope: f64 },
    #[serde(rename = "tanh")]
    Tanh,
    #[serde(rename = "dropout")]
    Dropout { p: f64 },
    #[serde(rename = "reshape")]
    Reshape { shape: Vec<usize> },
}

impl LayerSpec {
    pub fn dense(inputs: usize, outputs: usize) -> Self {
        LayerSpec::Dense { inputs, outputs }
    }

    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::Conv2D { in_channels, out_channels, kernel, stride, padding }
    }

    pub fn conv_t(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Self {
        LayerSpec::ConvTranspose2D { in_channels, out_channels, kernel, stride, padding, output_padding }
    }

    pub fn batch_norm(channels: usize) -> Self {
        LayerSpec::BatchNorm { channels, momentum: BN_MOMENTUM, eps: BN_EPS }
    }

    pub fn leaky_relu() -> Self {
        LayerSpec::LeakyReLU { slope: LEAKY_SLOPE }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "Dense",
            LayerSpec::Conv2D { .. } => "Conv2D",
            LayerSpec::ConvTranspose2D { .. } => "ConvTranspose2D",
            LayerSpec::MaxPool2x2 => "MaxPool2x2",
            LayerSpec::BatchNorm { .. } => "BatchNorm",
            LayerSpec::ReLU => "ReLU",
            LayerSpec::LeakyReLU { .. } => "LeakyReLU",
            LayerSpec::Tanh => "Tanh",
            LayerSpec::Dropout { .. } => "Dropout",
            LayerSpec::Reshape { .. } => "Reshape",
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        let numel: usize = input.iter().product();
        let chw = || -> std::result::Result<(usize, usize, usize), String> {
            match input {
                [c, h, w] => Ok((*c, *h, *w)),
                _ => Err(format!("expected [C, H, W] input, got {input:?}")),
            }
        };
        match self {
            LayerSpec::Dense { inputs, outputs } => {
                if numel != *inputs {
                    return Err(format!("expects {inputs} inputs, got {input:?}"));
                }
                Ok(vec![*outputs])
            }
            LayerSpec::Conv2D { in_channels, out_channels, kernel, stride, padding } => {
                let (c, h, w) = chw()?;
                if c != *in_channels {
                    return Err(format!("expects {in_channels} channels, got {c}"));
                }
                if *kernel == 0 || *stride == 0 {
                    return Err("kernel and stride must be positive".into());
                }
                if h + 2 * padding < *kernel || w + 2 * padding < *kernel {
                    return Err(format!("kernel {kernel} larger than padded input {h}x{w}"));
                }
                Ok(vec![
                    *out_channels,
                    (h + 2 * padding - kernel) / stride + 1,
                    (w + 2 * padding - kernel) / stride + 1,
                ])
            }
            LayerSpec::ConvTranspose2D { in_channels, out_channels, kernel, stride, padding, output_padding } => {
                let (c, h, w) = chw()?;
                if c != *in_channels {
                    return Err(format!("expects {in_channels} channels, got {c}"));
                }
                if *kernel == 0 || *stride == 0 {
                    return Err("kernel and stride must be positive".into());
                }
                if output_padding >= stride {
                    return Err(format!("output_padding {output_padding} must be below stride {stride}"));
                }
                let out = |n: usize| -> std::result::Result<usize, String> {
                    let full = n.saturating_sub(1) * stride + kernel + output_padding;
                    if n == 0 || full <= 2 * padding {
                        Err(format!("transposed convolution of size {n} is empty"))
                    } else {
                        Ok(full - 2 * padding)
                    }
                };
                Ok(vec![*out_channels, out(h)?, out(w)?])
            }
            LayerSpec::MaxPool2x2 => {
                let (c, h, w) = chw()?;
                if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
                    return Err(format!("2x2 pooling needs even spatial dims, got {h}x{w}"));
                }
                Ok(vec![c, h / 2, w / 2])
            }
            LayerSpec::BatchNorm { channels, momentum, eps } => {
                if input.is_empty() || input[0] != *channels || !(input.len() == 1 || input.len() == 3) {
                    return Err(format!("expects [{channels}] or [{channels}, H, W], got {input:?}"));
                }
                if !(*eps > 0.0) || !(0.0..=1.0).contains(momentum) {
                    return Err(format!("invalid momentum {momentum} or eps {eps}"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::LeakyReLU { slope } => {
                if !slope.is_finite() {
                    return Err("slope must be finite".into());
                }
                Ok(input.to_vec())
            }
            LayerSpec::Dropout { p } => {
                if !(0.0..1.0).contains(p) {
                    return Err(format!("drop probability {p} outside [0, 1)"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Reshape { shape } => {
                if shape.iter().product::<usize>() != numel {
                    return Err(format!("cannot reshape {input:?} to {shape:?}"));
                }
                Ok(shape.clone())
            }
            LayerSpec::ReLU | LayerSpec::Tanh => Ok(input.to_vec()),
        }
    }

    /// Named parameter tensors for this layer given its input shape.
    fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                vec![("weight", vec![outputs, inputs]), ("bias", vec![outputs])]
            }
            LayerSpec::Conv2D { in_channels, out_channels, kernel, .. } => vec![
                ("weight", vec![out_channels, in_channels, kernel, kernel]),
                ("bias", vec![out_channels]),
            ],
            LayerSpec::ConvTranspose2D { in_channels, out_channels, kernel, .. } => vec![
                ("weight", vec![in_channels, out_channels, kernel, kernel]),
                ("bias", vec![out_channels]),
            ],
            LayerSpec::BatchNorm { channels, .. } => {
                vec![("gamma", vec![channels]), ("beta", vec![channels])]
            }
            _ => Vec::new(),
        }
    }

    fn fans(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { inputs, outputs } => (inputs, outputs),
            LayerSpec::Conv2D { in_channels, out_channels, kernel, .. } => {
                (in_channels * kernel * kernel, out_channels * kernel * kernel)
            }
            LayerSpec::ConvTranspose2D { in_channels, out_channels, kernel, .. } => {
                (out_channels * kernel * kernel, in_channels * kernel * kernel)
            }
            _ => (0, 0),
        }
    }
}

/// An ordered layer list with a fixed per-sample input shape. Construction
/// shape-checks the whole chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = NetworkSpec { input_shape, layers };
        spec.shapes()?;
        Ok(spec)
    }

    /// Shapes before the first layer and after each layer (per sample).
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::shape("network input", format!("invalid shape {:?}", self.input_shape)));
        }
        let mut out = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer
                .output_shape(out.last().unwrap())
                .map_err(|m| Error::shape(format!("layer {i} ({})", layer.name()), m))?;
            out.push(next);
        }
        Ok(out)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shapes()?.pop().unwrap())
    }

    /// Offset of each layer's first parameter in the flat vector.
    pub(crate) fn param_offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.layers
            .iter()
            .map(|l| {
                let start = off;
                off += l.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum::<usize>();
                start
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum::<usize>())
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub layer: usize,
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub layer: usize,
    pub mean: Tensor,
    pub var: Tensor,
}

/// All trainable values of a network in one flat vector, plus the
/// batch-norm running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    pub flat: Tensor,
    pub layout: Vec<ParamEntry>,
    pub running: Vec<RunningStats>,
}

impl Parameters {
    pub fn layout_for(spec: &NetworkSpec) -> Vec<ParamEntry> {
        let mut out = Vec::new();
        let mut off = 0;
        for (i, l) in spec.layers.iter().enumerate() {
            for (name, shape) in l.param_shapes() {
                let len: usize = shape.iter().product();
                out.push(ParamEntry { layer: i, name: name.into(), offset: off, shape });
                off += len;
            }
        }
        out
    }

    /// Xavier-uniform weights, zero biases, unit batch-norm scale; each
    /// layer draws from its own stream derived from `seed`.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.shapes()?;
        let layout = Self::layout_for(spec);
        let mut flat = vec![0.0f32; spec.param_count()];
        let mut running = Vec::new();
        for entry in &layout {
            let layer = &spec.layers[entry.layer];
            let slot = &mut flat[entry.offset..entry.offset + entry.len()];
            match entry.name.as_str() {
                "weight" => {
                    let (fi, fo) = layer.fans();
                    let a = (6.0 / (fi + fo) as f64).sqrt();
                    let mut rng = seeded(derive_index_seed(seed, entry.layer as u64));
                    for v in slot.iter_mut() {
                        *v = rng.random_range(-a..a) as f32;
                    }
                }
                "gamma" => slot.fill(1.0),
                _ => {}
            }
        }
        for (i, l) in spec.layers.iter().enumerate() {
            if let LayerSpec::BatchNorm { channels, .. } = *l {
                running.push(RunningStats {
                    layer: i,
                    mean: Tensor::zeros(vec![channels]),
                    var: Tensor::new(vec![channels], vec![1.0; channels])?,
                });
            }
        }
        Ok(Parameters { flat: Tensor::new(vec![flat.len()], flat)?, layout, running })
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn entry(&self, layer: usize, name: &str) -> Option<&ParamEntry> {
        self.layout.iter().find(|e| e.layer == layer && e.name == name)
    }

    pub fn slice(&self, entry: &ParamEntry) -> &[f32] {
        &self.flat.data()[entry.offset..entry.offset + entry.len()]
    }

    /// Checks that these parameters fit `spec`.
    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layout != Self::layout_for(spec) || self.flat.len() != spec.param_count() {
            return Err(Error::shape("parameters", "layout does not match network"));
        }
        let bn: Vec<usize> = spec
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::BatchNorm { .. }))
            .map(|(i, _)| i)
            .collect();
        if self.running.iter().map(|r| r.layer).collect::<Vec<_>>() != bn {
            return Err(Error::shape("parameters", "running statistics do not match network"));
        }
        if self.running.iter().any(|r| r.var.data().iter().any(|v| !(*v > 0.0))) {
            return Err(Error::Data("running variance must be positive".into()));
        }
        Ok(())
    }

    /// Folds the batch statistics recorded by a train-mode forward pass
    /// into the running estimates.
    pub fn update_running_stats<R: Real>(&mut self, spec: &NetworkSpec, tape: &Tape<R>) -> Result<()> {
        for (layer, mean, var, count) in tape.batch_stats() {
            let momentum = match spec.layers[*layer] {
                LayerSpec::BatchNorm { momentum, .. } => momentum,
                _ => return Err(Error::shape("running stats", format!("layer {layer} is not batch norm"))),
            };
            let rs = self
                .running
                .iter_mut()
                .find(|r| r.layer == *layer)
                .ok_or_else(|| Error::shape("running stats", format!("no slot for layer {layer}")))?;
            let unbias = *count as f64 / (*count as f64 - 1.0).max(1.0);
            let m: Vec<f64> = rs
                .mean
                .data()
                .iter()
                .zip(mean)
                .map(|(r, b)| (1.0 - momentum) * *r as f64 + momentum * b)
                .collect();
            let v: Vec<f64> = rs
                .var
                .data()
                .iter()
                .zip(var)
                .map(|(r, b)| (1.0 - momentum) * *r as f64 + momentum * b * unbias)
                .collect();
            rs.mean = Tensor::from_f64(vec![m.len()], &m)?;
            rs.var = Tensor::from_f64(vec![v.len()], &v)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_chain_and_named_errors() {
        let spec = NetworkSpec::new(
            vec![4],
            vec![
                LayerSpec::dense(4, 2 * 3 * 3),
                LayerSpec::Reshape { shape: vec![2, 3, 3] },
                LayerSpec::conv_t(2, 5, 4, 2, 1, 0),
                LayerSpec::batch_norm(5),
                LayerSpec::ReLU,
            ],
        )
        .unwrap();
        assert_eq!(spec.output_shape().unwrap(), vec![5, 6, 6]);
        let bad = NetworkSpec::new(vec![4], vec![LayerSpec::dense(4, 8), LayerSpec::MaxPool2x2]);
        match bad {
            Err(Error::Shape { context, .. }) => assert!(context.contains("layer 1 (MaxPool2x2)")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn layout_sums_to_flat_length() {
        let spec = NetworkSpec::new(
            vec![1, 8, 8],
            vec![LayerSpec::conv(1, 3, 3, 1, 1), LayerSpec::batch_norm(3), LayerSpec::dense(192, 7)],
        )
        .unwrap();
        let p = Parameters::init(&spec, 1).unwrap();
        let total: usize = p.layout.iter().map(|e| e.len()).sum();
        assert_eq!(total, p.len());
        assert_eq!(p.len(), 27 + 3 + 3 + 3 + 192 * 7 + 7);
        assert!(p.slice(p.entry(1, "gamma").unwrap()).iter().all(|&v| v == 1.0));
        assert!(p.slice(p.entry(0, "bias").unwrap()).iter().all(|&v| v == 0.0));
        let a = (6.0f32 / (192.0 + 7.0)).sqrt();
        assert!(p.slice(p.entry(2, "weight").unwrap()).iter().all(|v| v.abs() <= a));
        p.check(&spec).unwrap();
        assert_eq!(Parameters::init(&spec, 1).unwrap(), p);
    }

    #[test]
    fn layer_spec_json_is_tagged() {
        let s = serde_json::to_string(&LayerSpec::leaky_relu()).unwrap();
        assert_eq!(s, r#"{"kind":"leaky_relu","slope":0.2}"#);
        let back: LayerSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, LayerSpec::leaky_relu());
    }
}
