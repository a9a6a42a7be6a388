use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Arithmetic used for the forward and backward passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
    /// Non-improving validation epochs tolerated before stopping.
    pub patience: usize,
    /// Loss and metric threshold on true demand.
    pub threshold: f64,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr_start: 1e-3,
            lr_end: 1e-4,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
            patience: 15,
            threshold: 5.0,
            seed: 0,
            precision: Precision::F64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr_end > 0.0 && self.lr_start >= self.lr_end) {
            return Err(Error::Config(format!(
                "learning rates must satisfy lr_start >= lr_end > 0 (got {} and {})",
                self.lr_start, self.lr_end
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return Err(Error::Config("Adam betas must lie in [0, 1) and eps be positive".into()));
        }
        if self.weight_decay < 0.0 || self.clip_norm < 0.0 {
            return Err(Error::Config("weight_decay and clip_norm must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Cosine decay from `lr_start` at epoch 0 to `lr_end` at the final epoch.
pub fn lr_schedule(epoch: usize, total_epochs: usize, lr_start: f64, lr_end: f64) -> f64 {
    if total_epochs <= 1 {
        return lr_start;
    }
    let progress = epoch.min(total_epochs - 1) as f64 / (total_epochs - 1) as f64;
    lr_end + (lr_start - lr_end) * (1.0 + (std::f64::consts::PI * progress).cos()) / 2.0
}
