use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, ModelParams};
use super::vocab::Vocab;
use super::{Model, Standardizer};
use crate::error::{Error, Result};
use crate::features::FEATURE_COUNT;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub vocab: Vec<String>,
    pub vocab_hash: String,
    pub feature_mean: [f64; FEATURE_COUNT],
    pub feature_std: [f64; FEATURE_COUNT],
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config: model.config,
            vocab: model.vocab.tokens().to_vec(),
            vocab_hash: model.vocab.hash(),
            feature_mean: model.standardizer.mean,
            feature_std: model.standardizer.std,
            tensors: model
                .params
                .tensors()
                .into_iter()
                .map(|t| TensorRecord {
                    name: t.name.to_string(),
                    shape: t.shape,
                    data: t.data.to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<Model> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let vocab = Vocab::from_list(self.vocab)?;
        if vocab.hash() != self.vocab_hash {
            return Err(Error::Checkpoint("vocabulary hash mismatch".into()));
        }
        let standardizer = Standardizer {
            mean: self.feature_mean,
            std: self.feature_std,
        };
        if !standardizer.is_valid() {
            return Err(Error::Checkpoint("feature standardization must be finite with positive std".into()));
        }
        let mut params = ModelParams::zeros(&self.config, vocab.len());
        let slots = params.tensors_mut();
        if slots.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                slots.len(),
                self.tensors.len()
            )));
        }
        for (slot, record) in slots.into_iter().zip(self.tensors) {
            if record.name != slot.name {
                return Err(Error::Checkpoint(format!(
                    "expected tensor {}, found {}",
                    slot.name, record.name
                )));
            }
            if record.shape != slot.shape || record.data.len() != slot.data.len() {
                return Err(Error::Shape {
                    what: format!("checkpoint tensor {}", record.name),
                    expected: format!("{:?}", slot.shape),
                    got: format!("{:?} with {} values", record.shape, record.data.len()),
                });
            }
            slot.data.copy_from_slice(&record.data);
        }
        if !params.is_finite() {
            return Err(Error::Checkpoint("non-finite parameter values".into()));
        }
        Ok(Model {
            config: self.config,
            vocab,
            standardizer,
            params,
        })
    }
}

impl Model {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint::from_model(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        ckpt.into_model()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
