use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ProbeConfig;
use super::features::PieceSequence;
use super::model::{param_count, NoteOutput, Params};
use super::tensor::Tensor;
use super::train::{predict, EpochLoss};
use crate::corpus::{read_json, write_json, Timestamp};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    config: ProbeConfig,
    params: Vec<NamedTensor>,
}

/// A trained probe in single precision. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    pub config: ProbeConfig,
    pub params: Params<f32>,
    pub model_id: String,
}

impl ProbeModel {
    pub fn new(config: ProbeConfig, params: Params<f32>) -> Result<Self> {
        config.validate()?;
        if params.num_parameters() != param_count(&config) {
            return Err(Error::CountMismatch {
                what: "parameters",
                expected: param_count(&config),
                got: params.num_parameters(),
            });
        }
        let mut model = ProbeModel {
            config,
            params,
            model_id: String::new(),
        };
        model.model_id = content_id(&model.to_bytes()?);
        Ok(model)
    }

    fn to_file(&self) -> ModelFile {
        let params = self
            .params
            .names()
            .into_iter()
            .zip(self.params.tensors())
            .map(|(name, t)| NamedTensor {
                name,
                shape: t.shape.clone(),
                data: t.data.clone(),
            })
            .collect();
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            config: self.config.clone(),
            params,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        serde_json::to_vec(&self.to_file()).map_err(|e| Error::Format {
            context: "model".into(),
            message: e.to_string(),
        })
    }

    pub fn from_bytes(bytes: &[u8], context: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_slice(bytes).map_err(|e| Error::Format {
            context: context.to_string(),
            message: e.to_string(),
        })?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format {
                context: context.to_string(),
                message: format!("unsupported model format {}", file.format_version),
            });
        }
        file.config.validate()?;
        let mut params = Params::<f32>::init(&ProbeConfig {
            seed: 0,
            ..file.config.clone()
        });
        let names = params.names();
        if names.len() != file.params.len() {
            return Err(Error::CountMismatch {
                what: "model tensors",
                expected: names.len(),
                got: file.params.len(),
            });
        }
        for ((name, slot), stored) in names.iter().zip(params.tensors_mut()).zip(file.params) {
            if *name != stored.name || slot.shape != stored.shape || stored.data.len() != slot.len() {
                return Err(Error::Format {
                    context: context.to_string(),
                    message: format!("tensor {} does not match {name} {:?}", stored.name, slot.shape),
                });
            }
            *slot = Tensor {
                shape: stored.shape,
                data: stored.data,
            };
        }
        ProbeModel::new(file.config, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::corpus::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }

    pub fn predict(&self, sequence: &PieceSequence) -> Result<Vec<NoteOutput>> {
        predict(&self.params, &self.config, sequence)
    }
}

/// First 16 hex digits of the SHA-256 of `bytes`.
pub fn content_id(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub model_id: String,
    pub piece_ids: Vec<String>,
    pub seed: u64,
    pub config: ProbeConfig,
    pub started_at: Timestamp,
    pub finished_at: Timestamp,
    pub epoch_losses: Vec<EpochLoss>,
}

impl TrainingManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}
