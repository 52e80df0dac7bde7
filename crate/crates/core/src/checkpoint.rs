//! Named-tensor container shared by every checkpoint kind.
//!
//! Checkpoints are JSON documents: a format tag, a version, free-form
//! metadata and an ordered list of `{name, shape, data}` tensors. Floats are
//! written in shortest round-trip form, so save/load is lossless and the
//! bytes are a pure function of the values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NamedTensor<T> {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<T>,
}

impl<T: Scalar> NamedTensor<T> {
    pub fn new(name: impl Into<String>, m: &Matrix<T>) -> Self {
        Self { name: name.into(), shape: [m.rows(), m.cols()], data: m.data().to_vec() }
    }

    pub fn to_matrix(&self) -> Result<Matrix<T>> {
        let [r, c] = self.shape;
        if r * c != self.data.len() {
            return Err(Error::Checkpoint(format!(
                "tensor {} has shape {r}x{c} but {} values",
                self.name,
                self.data.len()
            )));
        }
        Ok(Matrix::from_vec(r, c, self.data.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TensorBundle<T> {
    pub format: String,
    pub version: u32,
    pub meta: serde_json::Value,
    pub tensors: Vec<NamedTensor<T>>,
}

impl<T: Scalar> TensorBundle<T> {
    pub fn new(format: &str, meta: serde_json::Value) -> Self {
        Self { format: format.into(), version: CHECKPOINT_VERSION, meta, tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, m: &Matrix<T>) {
        self.tensors.push(NamedTensor::new(name, m));
    }

    pub fn get(&self, name: &str) -> Result<Matrix<T>> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?
            .to_matrix()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("bundle serializes")
    }

    pub fn from_bytes(bytes: &[u8], format: &str) -> Result<Self> {
        let bundle: Self = serde_json::from_slice(bytes)?;
        if bundle.format != format {
            return Err(Error::Checkpoint(format!(
                "expected format {format:?}, found {:?}",
                bundle.format
            )));
        }
        if bundle.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", bundle.version)));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        if let Some(parent) = path.as_ref().parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, format: &str) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)
            .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes, format)
    }
}
