use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How region values are combined into a cluster value when building an
/// aggregated stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Sum,
    Mean,
}

/// Network geometry. All branch widths equal `hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub layers: usize,
    pub input_steps: usize,
    pub horizon: usize,
    pub features: usize,
    /// Cluster count per aggregation level; empty disables spatial
    /// aggregation.
    pub level_counts: Vec<usize>,
    /// Temporal aggregation slots.
    pub slots: usize,
    pub lambda_init: f64,
    pub mlp_expansion: usize,
    pub aggregation: Aggregation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            layers: 6,
            input_steps: 6,
            horizon: 6,
            features: 1,
            level_counts: Vec::new(),
            slots: 3,
            lambda_init: 0.8,
            mlp_expansion: 4,
            aggregation: Aggregation::Sum,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("input_steps", self.input_steps),
            ("horizon", self.horizon),
            ("features", self.features),
            ("slots", self.slots),
            ("mlp_expansion", self.mlp_expansion),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.hidden.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "hidden width {} must be even",
                self.hidden
            )));
        }
        if !self.lambda_init.is_finite() {
            return Err(Error::Config("lambda_init must be finite".into()));
        }
        for w in self.level_counts.windows(2) {
            if w[1] >= w[0] {
                return Err(Error::Config(format!(
                    "level counts {:?} must be strictly decreasing",
                    self.level_counts
                )));
            }
        }
        if self.level_counts.contains(&0) {
            return Err(Error::Config("level counts must be positive".into()));
        }
        Ok(())
    }

    /// Width of the concatenated branch outputs fed to the fusion projection.
    pub fn fusion_width(&self) -> usize {
        if self.level_counts.is_empty() {
            3 * self.hidden
        } else {
            4 * self.hidden
        }
    }
}
