use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Parameterized, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Named parameter tensors with a format version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Checkpoint<S> {
    pub format_version: u32,
    pub tensors: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> Checkpoint<S> {
    pub fn capture<M: Parameterized<S> + ?Sized>(model: &M) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            tensors: model
                .named_params()
                .into_iter()
                .map(|(name, t)| (name, t.clone()))
                .collect(),
        }
    }

    /// Copies every tensor into `model`, rejecting missing names and shape
    /// mismatches before anything is written.
    pub fn restore<M: Parameterized<S> + ?Sized>(&self, model: &mut M) -> Result<()> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.format_version)));
        }
        let names: Vec<(String, Vec<usize>)> = model
            .named_params()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if names.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, checkpoint has {}",
                names.len(),
                self.tensors.len()
            )));
        }
        for (name, shape) in &names {
            let t = self
                .tensors
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "shape mismatch for {name}: model {shape:?}, checkpoint {:?}",
                    t.shape()
                )));
            }
        }
        for ((name, _), dst) in names.iter().zip(model.params_mut()) {
            dst.data_mut().copy_from_slice(self.tensors[name].data());
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
