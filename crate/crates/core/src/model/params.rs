use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::clustering::ClusterHierarchy;
use crate::diffcore::{DiffArray, Real};
use crate::model::ModelConfig;
use crate::pipeline::TIME_FEATURES;
use crate::{Error, Result};

/// Named parameter registry. Names are unique; iteration follows
/// registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters<T> {
    names: Vec<String>,
    arrays: Vec<DiffArray<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> Default for ModelParameters<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            arrays: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Real> ModelParameters<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, value: DiffArray<T>) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::contract(format!("parameter {name} registered twice")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.arrays.push(value);
        Ok(self.names.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn arrays(&self) -> &[DiffArray<T>] {
        &self.arrays
    }

    pub fn arrays_mut(&mut self) -> &mut [DiffArray<T>] {
        &mut self.arrays
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&DiffArray<T>> {
        self.position(name).map(|i| &self.arrays[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut DiffArray<T>> {
        self.position(name).map(|i| &mut self.arrays[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DiffArray<T>)> {
        self.names.iter().map(String::as_str).zip(&self.arrays)
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.arrays.iter().map(DiffArray::numel).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParameters<U> {
        ModelParameters {
            names: self.names.clone(),
            arrays: self.arrays.iter().map(DiffArray::cast).collect(),
            index: self.index.clone(),
        }
    }
}

/// Expected `(name, shape)` list for a configuration, in registration order.
pub fn parameter_layout(config: &ModelConfig, n_regions: usize) -> Vec<(String, Vec<usize>)> {
    let d = config.hidden;
    let h = d / 2;
    let mut out: Vec<(String, Vec<usize>)> = vec![
        ("embed.w_raw".into(), vec![config.features, d]),
        ("embed.w_tod".into(), vec![1, d]),
        ("embed.w_dow".into(), vec![7, d]),
        ("embed.spatial".into(), vec![n_regions, d]),
    ];
    for (i, &m) in config.level_counts.iter().enumerate() {
        out.push((format!("embed.level{i}.spatial"), vec![m, d]));
    }
    for l in 0..config.layers {
        let p = format!("layer{l}");
        for w in ["w_q", "w_k", "w_v"] {
            out.push((format!("{p}.sda.{w}"), vec![d, d]));
        }
        for w in ["lambda_q1", "lambda_k1", "lambda_q2", "lambda_k2"] {
            out.push((format!("{p}.sda.{w}"), vec![1, h]));
        }
        for (i, &m) in config.level_counts.iter().enumerate() {
            for w in ["w_q", "w_k", "w_v"] {
                out.push((format!("{p}.sca{i}.{w}"), vec![d, d]));
            }
            out.push((format!("{p}.sca{i}.sep"), vec![m, n_regions]));
        }
        for w in ["w_q", "w_k", "w_v"] {
            out.push((format!("{p}.tsa.{w}"), vec![d, d]));
        }
        out.push((format!("{p}.taa.query"), vec![n_regions, config.slots, d]));
        out.push((format!("{p}.taa.w_k"), vec![d, d]));
        out.push((format!("{p}.taa.w_v"), vec![d, d]));
        out.push((format!("{p}.taa.w_sep"), vec![TIME_FEATURES, config.slots]));
        out.push((format!("{p}.w_o"), vec![config.fusion_width(), d]));
        out.push((format!("{p}.norm1.gain"), vec![d]));
        out.push((format!("{p}.norm1.bias"), vec![d]));
        let wide = d * config.mlp_expansion;
        out.push((format!("{p}.mlp.w1"), vec![d, wide]));
        out.push((format!("{p}.mlp.b1"), vec![wide]));
        out.push((format!("{p}.mlp.w2"), vec![wide, d]));
        out.push((format!("{p}.mlp.b2"), vec![d]));
        out.push((format!("{p}.norm2.gain"), vec![d]));
        out.push((format!("{p}.norm2.bias"), vec![d]));
    }
    out.push(("head.w".into(), vec![config.input_steps * d, config.horizon * config.features]));
    out.push(("head.b".into(), vec![config.horizon * config.features]));
    out
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> DiffArray<f64> {
    DiffArray::from_fn(shape, |_| rng.random_range(-bound..bound))
}

fn gaussian(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> DiffArray<f64> {
    let normal = Normal::new(0.0, std).expect("positive standard deviation");
    DiffArray::from_fn(shape, |_| normal.sample(rng))
}

/// Seeded initialisation.
///
/// Projections draw from `U(-sqrt(6/fan_in), sqrt(6/fan_in))`; lambda
/// half-vectors from `N(0, 0.1)`; spatial embeddings from `N(0, 0.02)`;
/// temporal queries from `U(-sqrt(6/d), sqrt(6/d))`; separation matrices
/// are the cluster map times `U[0, 1)`. Biases and norm offsets start at 0,
/// norm gains at 1.
pub fn init_parameters(
    config: &ModelConfig,
    n_regions: usize,
    hierarchy: &ClusterHierarchy,
    seed: u64,
) -> Result<ModelParameters<f64>> {
    config.validate()?;
    check_hierarchy(config, n_regions, hierarchy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParameters::new();
    for (name, shape) in parameter_layout(config, n_regions) {
        let leaf = name.rsplit('.').next().unwrap_or_default();
        let value = if leaf == "spatial" {
            gaussian(&mut rng, &shape, 0.02)
        } else if leaf.starts_with("lambda_") {
            gaussian(&mut rng, &shape, 0.1)
        } else if leaf == "gain" {
            DiffArray::full(&shape, 1.0)
        } else if matches!(leaf, "bias" | "b" | "b1" | "b2") {
            DiffArray::zeros(&shape)
        } else if leaf == "sep" {
            let level: usize = name
                .split('.')
                .nth(1)
                .and_then(|s| s.strip_prefix("sca"))
                .and_then(|s| s.parse().ok())
                .expect("separation names carry their level");
            init_separation_matrix(&hierarchy.levels[level].cluster_map(), &shape, &mut rng)?
        } else if leaf == "query" {
            uniform(&mut rng, &shape, (6.0 / config.hidden as f64).sqrt())
        } else {
            uniform(&mut rng, &shape, (6.0 / shape[0] as f64).sqrt())
        };
        params.register(name, value)?;
    }
    Ok(params)
}

/// `cluster_map ⊙ U[0, 1)`, applied once at initialisation.
pub fn init_separation_matrix(
    cluster_map: &[f64],
    shape: &[usize],
    rng: &mut impl Rng,
) -> Result<DiffArray<f64>> {
    if shape.len() != 2 || shape[0] * shape[1] != cluster_map.len() {
        return Err(Error::shape(format!(
            "cluster map of {} entries does not fit separation shape {shape:?}",
            cluster_map.len()
        )));
    }
    let data = cluster_map
        .iter()
        .map(|&m| {
            let g: f64 = rng.random_range(0.0..1.0);
            m * g
        })
        .collect();
    DiffArray::new(shape.to_vec(), data)
}

pub(crate) fn check_hierarchy(
    config: &ModelConfig,
    n_regions: usize,
    hierarchy: &ClusterHierarchy,
) -> Result<()> {
    if hierarchy.level_counts() != config.level_counts {
        return Err(Error::Config(format!(
            "hierarchy levels {:?} disagree with configured level counts {:?}",
            hierarchy.level_counts(),
            config.level_counts
        )));
    }
    if let Some(n) = hierarchy.n_regions() {
        if n != n_regions {
            return Err(Error::Config(format!(
                "hierarchy covers {n} regions, model expects {n_regions}"
            )));
        }
    }
    Ok(())
}

/// Checks that `params` carries exactly the layout of `config`.
pub fn check_layout<T: Real>(
    params: &ModelParameters<T>,
    config: &ModelConfig,
    n_regions: usize,
) -> Result<()> {
    let layout = parameter_layout(config, n_regions);
    if layout.len() != params.len() {
        return Err(Error::Config(format!(
            "expected {} parameter arrays, found {}",
            layout.len(),
            params.len()
        )));
    }
    for ((name, shape), (have, array)) in layout.iter().zip(params.iter()) {
        if name != have || shape.as_slice() != array.shape() {
            return Err(Error::Config(format!(
                "parameter mismatch: expected {name} {shape:?}, found {have} {:?}",
                array.shape()
            )));
        }
    }
    Ok(())
}
