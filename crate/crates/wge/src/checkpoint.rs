//! Neural-policy checkpoints: named tensors, the vocabulary, and the
//! training config they came from, identified by a SHA-256 hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wge_core::domnet::{DomNet, Vocab};
use wge_core::nn::Tensor;
use wge_core::trainer::{Algo, MetricRecord, TrainConfig};

use crate::store::{atomic_write, read_to_string};
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub algo: Algo,
    pub config: TrainConfig,
    pub config_hash: String,
    /// The evaluation this network was saved at.
    pub metric: Option<MetricRecord>,
    pub vocab: Vocab,
    pub tensors: Vec<NamedTensor>,
}

/// Hex SHA-256 of the config's JSON encoding.
pub fn config_hash(config: &TrainConfig) -> String {
    let json = serde_json::to_string(config).expect("plain struct");
    hex::encode(Sha256::digest(json.as_bytes()))
}

impl Checkpoint {
    pub fn new(algo: Algo, config: &TrainConfig, metric: Option<MetricRecord>, net: &DomNet) -> Self {
        let tensors = net
            .params
            .iter()
            .map(|(name, t)| NamedTensor { name: name.into(), rows: t.rows(), cols: t.cols(), data: t.data().to_vec() })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            algo,
            config: config.clone(),
            config_hash: config_hash(config),
            metric,
            vocab: net.vocab.clone(),
            tensors,
        }
    }

    /// Rebuilds the network, checking names, shapes and the config hash.
    pub fn network(&self) -> Result<DomNet> {
        let named: Vec<(String, Tensor)> = self
            .tensors
            .iter()
            .map(|t| {
                if t.data.len() != t.rows * t.cols {
                    return Err(Error::Invalid(format!("tensor {} has {} values for shape {}x{}", t.name, t.data.len(), t.rows, t.cols)));
                }
                Ok((t.name.clone(), Tensor::from_vec(t.rows, t.cols, t.data.clone())))
            })
            .collect::<Result<_>>()?;
        DomNet::with_params(self.config.neural.clone(), self.vocab.clone(), &named).map_err(Error::Invalid)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain struct")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "checkpoint".into(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Invalid(format!("unsupported checkpoint version {}", c.version)));
        }
        if c.config_hash != config_hash(&c.config) {
            return Err(Error::Invalid("checkpoint config does not match its hash".into()));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?)
    }
}
