use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::archive;
use crate::clustering::HierarchyFile;
use crate::diffcore::{DiffArray, Real};
use crate::model::{AdFormer, ModelConfig, ModelParameters};
use crate::pipeline::Normalizer;
use crate::training::TrainConfig;
use crate::{Error, Result};

const KIND: &str = "checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    model: ModelConfig,
    train: TrainConfig,
    region_ids: Vec<String>,
    normalizer: Normalizer,
    hierarchy: HierarchyFile,
    epoch: usize,
    val_score: Option<f64>,
    tensors: Vec<TensorEntry>,
}

/// Everything needed to rebuild a trained model: configuration echo,
/// normaliser, region order, hierarchy and parameters (stored as `f64`).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub region_ids: Vec<String>,
    pub normalizer: Normalizer,
    pub hierarchy: HierarchyFile,
    /// Epoch (0-based) the parameters were taken from.
    pub epoch: usize,
    pub val_score: Option<f64>,
    pub params: ModelParameters<f64>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: KIND.into(),
            model: self.model.clone(),
            train: self.train.clone(),
            region_ids: self.region_ids.clone(),
            normalizer: self.normalizer.clone(),
            hierarchy: self.hierarchy.clone(),
            epoch: self.epoch,
            val_score: self.val_score,
            tensors: self
                .params
                .iter()
                .map(|(name, a)| TensorEntry {
                    name: name.to_string(),
                    shape: a.shape().to_vec(),
                })
                .collect(),
        };
        let payload: Vec<f64> = self.params.arrays().iter().flat_map(|a| a.data().iter().copied()).collect();
        archive::encode(&header, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, payload): (Header, Vec<f64>) = archive::decode(bytes)?;
        if h.kind != KIND {
            return Err(Error::Archive(format!("expected a checkpoint archive, found {:?}", h.kind)));
        }
        let mut params = ModelParameters::new();
        let mut offset = 0;
        for t in h.tensors {
            let n: usize = t.shape.iter().product();
            let data = payload
                .get(offset..offset + n)
                .ok_or_else(|| Error::Archive(format!("payload too short for tensor {}", t.name)))?;
            params.register(t.name, DiffArray::new(t.shape, data.to_vec())?)?;
            offset += n;
        }
        if offset != payload.len() {
            return Err(Error::Archive(format!(
                "payload holds {} values, tensors account for {offset}",
                payload.len()
            )));
        }
        Ok(Self {
            model: h.model,
            train: h.train,
            region_ids: h.region_ids,
            normalizer: h.normalizer,
            hierarchy: h.hierarchy,
            epoch: h.epoch,
            val_score: h.val_score,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Rebuilds the model at precision `T`, checking the parameter layout.
    pub fn build_model<T: Real>(&self) -> Result<AdFormer<T>> {
        AdFormer::from_parameters(
            &self.model,
            self.region_ids.len(),
            &self.hierarchy.hierarchy()?,
            self.params.cast(),
        )
    }
}
