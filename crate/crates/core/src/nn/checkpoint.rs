use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NetworkSpec, ParamEntry, Parameters, RunningStats};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &str = "MGCKPT/1";

/// A network with its parameters and free-form metadata (optimizer
/// settings, epoch, schedule, ...).
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub params: Parameters,
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    spec: NetworkSpec,
    layout: Vec<ParamEntry>,
    running_layers: Vec<usize>,
    blob_bytes: Vec<usize>,
    meta: serde_json::Value,
}

impl Checkpoint {
    /// `MGCKPT/1\n`, one line of JSON header, then MGT1 blobs: the flat
    /// parameters followed by (mean, var) for each batch-norm layer.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.params.check(&self.spec)?;
        let mut blobs = vec![self.params.flat.to_bytes()];
        for r in &self.params.running {
            blobs.push(r.mean.to_bytes());
            blobs.push(r.var.to_bytes());
        }
        let header = Header {
            format: MAGIC.into(),
            spec: self.spec.clone(),
            layout: self.params.layout.clone(),
            running_layers: self.params.running.iter().map(|r| r.layer).collect(),
            blob_bytes: blobs.iter().map(|b| b.len()).collect(),
            meta: self.meta.clone(),
        };
        let mut out = format!("{MAGIC}\n").into_bytes();
        out.extend(serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?);
        out.push(b'\n');
        for b in blobs {
            out.extend(b);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let magic_end = MAGIC.len() + 1;
        if bytes.len() < magic_end || &bytes[..magic_end] != format!("{MAGIC}\n").as_bytes() {
            return Err(Error::Format("not an MGCKPT/1 checkpoint".into()));
        }
        let rest = &bytes[magic_end..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("checkpoint header is not terminated".into()))?;
        let header: Header = serde_json::from_slice(&rest[..nl])
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        let spec = NetworkSpec::new(header.spec.input_shape, header.spec.layers)?;
        let mut pos = nl + 1;
        let mut tensors = Vec::new();
        for len in &header.blob_bytes {
            let blob = rest
                .get(pos..pos + len)
                .ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
            tensors.push(Tensor::from_bytes(blob)?);
            pos += len;
        }
        if pos != rest.len() || tensors.len() != 1 + 2 * header.running_layers.len() {
            return Err(Error::Format("checkpoint blob count or size mismatch".into()));
        }
        let mut it = tensors.into_iter();
        let flat = it.next().unwrap();
        let running = header
            .running_layers
            .iter()
            .map(|&layer| RunningStats { layer, mean: it.next().unwrap(), var: it.next().unwrap() })
            .collect();
        let params = Parameters { flat, layout: header.layout, running };
        params.check(&spec).map_err(|e| Error::Format(format!("checkpoint does not fit its network: {e}")))?;
        Ok(Checkpoint { spec, params, meta: header.meta })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;

    fn sample() -> Checkpoint {
        let spec = NetworkSpec::new(
            vec![3],
            vec![LayerSpec::dense(3, 4), LayerSpec::batch_norm(4), LayerSpec::ReLU, LayerSpec::dense(4, 2)],
        )
        .unwrap();
        let params = Parameters::init(&spec, 2).unwrap();
        Checkpoint { spec, params, meta: serde_json::json!({"epoch": 7, "lr": 2e-4}) }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&c, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), c);
        assert!(fs::read(&path).unwrap().starts_with(b"MGCKPT/1\n"));
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let bytes = sample().to_bytes().unwrap();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        assert!(matches!(Checkpoint::from_bytes(b"MGCKPT/2\n{}\n"), Err(Error::Format(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(Checkpoint::from_bytes(&extra), Err(Error::Format(_))));
    }
}
