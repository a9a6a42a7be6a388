use std::path::{Path, PathBuf};

use adformer::clustering::DEFAULT_THRESHOLD_FACTOR;
use adformer::model::ModelConfig;
use adformer::pipeline::parse_utc_offset;
use adformer::training::TrainConfig;
use anyhow::{bail, Context, Result};
use chrono::FixedOffset;
use serde::{Deserialize, Serialize};

use crate::MissingFile;

/// Artifact locations. Relative paths are resolved against the directory of
/// the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub trips: PathBuf,
    pub archive: PathBuf,
    pub hierarchy: PathBuf,
    pub checkpoint: PathBuf,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    pub bin_width_secs: i64,
    /// Fixed offset such as `+08:00`; fixes bin alignment and the calendar.
    pub utc_offset: String,
    pub input_steps: usize,
    pub horizon: usize,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            bin_width_secs: 1800,
            utc_offset: "+00:00".into(),
            input_steps: 6,
            horizon: 6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSettings {
    pub level_counts: Vec<usize>,
    pub threshold_factor: f64,
}

impl Default for ClusterSettings {
    fn default() -> Self {
        Self {
            level_counts: Vec::new(),
            threshold_factor: DEFAULT_THRESHOLD_FACTOR,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    #[serde(default)]
    pub pipeline: PipelineSettings,
    #[serde(default)]
    pub clustering: ClusterSettings,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(MissingFile(path.to_path_buf()).into());
        }
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let raw: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(model) = raw.get("model").and_then(|m| m.as_object()) {
            for key in ["input_steps", "horizon", "level_counts"] {
                if model.contains_key(key) {
                    bail!("model.{key} is derived; set it under `pipeline` or `clustering` instead");
                }
            }
        }
        let mut config: RunConfig =
            serde_json::from_value(raw).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut config.paths.trips,
            &mut config.paths.archive,
            &mut config.paths.hierarchy,
            &mut config.paths.checkpoint,
            &mut config.paths.output_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.sync();
        config.validate()?;
        Ok(config)
    }

    /// Copies the pipeline, clustering and seed settings into the model and
    /// training sections.
    pub fn sync(&mut self) {
        self.model.input_steps = self.pipeline.input_steps;
        self.model.horizon = self.pipeline.horizon;
        self.model.level_counts = self.clustering.level_counts.clone();
        self.train.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        if self.pipeline.input_steps == 0 || self.pipeline.horizon == 0 {
            bail!("pipeline.input_steps and pipeline.horizon must be positive");
        }
        self.offset()?;
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn offset(&self) -> Result<FixedOffset> {
        Ok(parse_utc_offset(&self.pipeline.utc_offset)?)
    }
}

/// Fails with a missing-file error when `path` does not exist.
pub fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(MissingFile(path.to_path_buf()).into())
    }
}
