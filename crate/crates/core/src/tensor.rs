//! Dense f32 tensors and the `MGT1` binary file format.
//!
//! Layout of an `MGT1` file (all integers and floats little-endian):
//!
//! ```text
//! b"MGT1" | rank: u32 | dims: rank x u32 | payload: prod(dims) x f32
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MGT1";

/// Row-major dense array of `f32` with an explicit shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, checking that the shape matches the payload and that
    /// every value is finite.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {:?} needs {} values, got {}", shape, expected, data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at flat index {i}")));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Tensor::new(shape, data.iter().map(|&v| v as f32).collect())
    }

    /// 2-D tensor from row-major f64 values.
    pub fn matrix_from_f64(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Tensor::from_f64(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Leading dimension, or 0 for a rank-0 tensor.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Product of all but the leading dimension.
    pub fn row_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {:?}", self.shape, shape),
            ));
        }
        Ok(Tensor {
            shape,
            data: self.data,
        })
    }

    /// Gathers the given leading-dimension rows into a new tensor.
    pub fn select_rows(&self, idx: &[usize]) -> Tensor {
        let w = self.row_len();
        let mut data = Vec::with_capacity(idx.len() * w);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        if shape.is_empty() {
            shape.push(idx.len());
        } else {
            shape[0] = idx.len();
        }
        Tensor { shape, data }
    }

    /// Serializes to the `MGT1` byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.shape.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing MGT1 magic".into()));
        }
        let rank = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let header = 8 + 4 * rank;
        if bytes.len() < header {
            return Err(Error::Format(format!(
                "truncated header: rank {rank} needs {header} bytes, file has {}",
                bytes.len()
            )));
        }
        let shape: Vec<usize> = bytes[8..header]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("declared element count overflows".into()))?;
        let payload = &bytes[header..];
        if payload.len() != count * 4 {
            return Err(Error::Format(format!(
                "payload holds {} bytes but shape {:?} declares {} floats",
                payload.len(),
                shape,
                count
            )));
        }
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(i) = data.iter().position(|v| v.is_nan()) {
            return Err(Error::Data(format!("NaN in payload at flat index {i}")));
        }
        Tensor::new(shape, data)
    }
}

pub fn save_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&t.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_file_is_32_bytes() {
        let t = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.to_bytes().len(), 32);
    }

    #[test]
    fn empty_tensor_is_12_bytes_and_loads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.mgt");
        let t = Tensor::new(vec![0], vec![]).unwrap();
        save_tensor(&t, &p).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 12);
        let back = load_tensor(&p).unwrap();
        assert_eq!(back.shape(), &[0]);
        assert!(back.is_empty());
    }

    #[test]
    fn zeros_round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.mgt");
        save_tensor(&Tensor::new(vec![3], vec![0.0; 3]).unwrap(), &p).unwrap();
        let t = load_tensor(&p).unwrap();
        assert_eq!(t.shape(), &[3]);
        assert_eq!(t.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut b = Tensor::zeros(vec![2]).to_bytes();
        b[..4].copy_from_slice(b"XXXX");
        assert!(matches!(Tensor::from_bytes(&b), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&10u32.to_le_bytes());
        b.extend(std::iter::repeat(0u8).take(8 * 4));
        assert!(matches!(Tensor::from_bytes(&b), Err(Error::Format(_))));
    }

    #[test]
    fn nan_payload_is_data_error() {
        let mut b = Tensor::zeros(vec![2]).to_bytes();
        b[12..16].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(Tensor::from_bytes(&b), Err(Error::Data(_))));
    }

    #[test]
    fn missing_file_reports_path() {
        let err = load_tensor("/nonexistent/x.mgt").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.mgt"));
    }

    #[test]
    fn constructor_rejects_mismatch_and_nonfinite() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![1], vec![f32::INFINITY]).is_err());
    }

    proptest! {
        #[test]
        fn bytes_round_trip_bitwise(
            dims in proptest::collection::vec(0usize..5, 0..4),
            seed in any::<u32>(),
        ) {
            let n: usize = dims.iter().product();
            let data: Vec<f32> = (0..n)
                .map(|i| ((i as u32).wrapping_mul(2654435761) ^ seed) as f32 * 1e-7 - 123.5)
                .collect();
            let t = Tensor::new(dims.clone(), data).unwrap();
            let back = Tensor::from_bytes(&t.to_bytes()).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            let a: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
