use crate::clustering::ClusterHierarchy;
use crate::diffcore::{DiffArray, Real, Tape, Var};
use crate::model::layers::{
    spatial_cluster_attention, spatial_differential_attention, temporal_aggregation_attention,
    temporal_self_attention, AggregationWeights, AttentionWeights, ClusterWeights,
    DifferentialWeights, Trace,
};
use crate::model::params::{check_hierarchy, check_layout, init_parameters};
use crate::model::{Aggregation, ModelConfig, ModelParameters};
use crate::pipeline::{ForecastBatch, TIME_FEATURES};
use crate::{Error, Result};

/// `PE[pos][2i] = sin(pos / 10000^(2i/d))`, `PE[pos][2i+1] = cos(..)`.
pub fn sinusoidal_encoding(steps: usize, d: usize) -> Result<DiffArray<f64>> {
    if !d.is_multiple_of(2) {
        return Err(Error::shape(format!("positional width {d} must be even")));
    }
    Ok(DiffArray::from_fn(&[steps, d], |i| {
        let (pos, col) = (i / d, i % d);
        let pair = (col / 2 * 2) as f64;
        let angle = pos as f64 / 10_000f64.powf(pair / d as f64);
        if col % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    }))
}

#[derive(Debug, Clone, Copy)]
pub struct EmbeddingWeights {
    pub w_raw: Var,
    pub w_tod: Var,
    pub w_dow: Var,
}

/// Time inputs of a batch, laid out for the embedding and the temporal
/// aggregation branch.
#[derive(Debug, Clone, Copy)]
pub struct TimeInputs {
    /// `B x T x 1 x 1`.
    pub tod: Var,
    /// `B x T x 1 x 7`.
    pub dow: Var,
    /// `B x T x 8`.
    pub vector: Var,
    /// `T x 1 x d` positional encoding.
    pub position: Var,
}

impl TimeInputs {
    pub fn new<T: Real>(tape: &mut Tape<T>, time: &[f64], batch: usize, steps: usize, d: usize) -> Result<Self> {
        if time.len() != batch * steps * TIME_FEATURES {
            return Err(Error::shape(format!(
                "time block has {} values, expected {batch} x {steps} x {TIME_FEATURES}",
                time.len()
            )));
        }
        let cells = batch * steps;
        let tod: Vec<f64> = (0..cells).map(|c| time[c * TIME_FEATURES]).collect();
        let dow: Vec<f64> = (0..cells)
            .flat_map(|c| time[c * TIME_FEATURES + 1..(c + 1) * TIME_FEATURES].iter().copied())
            .collect();
        let tod = tape.constant(DiffArray::from_f64(vec![batch, steps, 1, 1], &tod)?);
        let dow = tape.constant(DiffArray::from_f64(vec![batch, steps, 1, 7], &dow)?);
        let vector = tape.constant(DiffArray::from_f64(vec![batch, steps, TIME_FEATURES], time)?);
        let pe = sinusoidal_encoding(steps, d)?.reshaped(vec![steps, 1, d])?;
        let position = tape.constant(pe.cast());
        Ok(Self {
            tod,
            dow,
            vector,
            position,
        })
    }
}

/// `x·W_raw + tod·W_tod + dow·W_dow + PE + spatial`, where `x` is
/// `B x T x N x D` and `spatial` is `N x d`.
pub fn embed<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    time: &TimeInputs,
    w: &EmbeddingWeights,
    spatial: Var,
) -> Result<Var> {
    let e = tape.matmul(x, w.w_raw)?;
    let td = tape.matmul(time.tod, w.w_tod)?;
    let tw = tape.matmul(time.dow, w.w_dow)?;
    let e = tape.add(e, td)?;
    let e = tape.add(e, tw)?;
    let e = tape.add(e, time.position)?;
    tape.add(e, spatial)
}

/// Cluster-level stream: `cluster_map · x` over the region axis, then the
/// shared embedding with the level's own spatial identities.
pub fn aggregate_stream<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    cluster_map: Var,
    time: &TimeInputs,
    w: &EmbeddingWeights,
    spatial: Var,
) -> Result<Var> {
    let xa = tape.matmul(cluster_map, x)?;
    embed(tape, xa, time, w, spatial)
}

#[derive(Debug, Clone)]
pub struct LayerWeights {
    pub sda: DifferentialWeights,
    pub sca: Vec<ClusterWeights>,
    pub tsa: AttentionWeights,
    pub taa: AggregationWeights,
    pub w_o: Var,
    pub norm1: (Var, Var),
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub norm2: (Var, Var),
}

/// One encoder block:
/// `H = LN([SDA(X) | Σ SCA(Xa_i) | TSA(X) | TAA(X)]·W_O + X)`,
/// output `LN(MLP(H) + H)`.
#[allow(clippy::too_many_arguments)]
pub fn encoder_layer<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    streams: &[Var],
    time: &TimeInputs,
    w: &LayerWeights,
    lambda_init: f64,
    trace: &mut Trace,
    label: &str,
) -> Result<Var> {
    if streams.len() != w.sca.len() {
        return Err(Error::shape(format!(
            "{} aggregated streams for {} cluster branches",
            streams.len(),
            w.sca.len()
        )));
    }
    let mut parts = vec![spatial_differential_attention(
        tape,
        x,
        &w.sda,
        lambda_init,
        trace,
        &format!("{label}.sda"),
    )?];
    let mut cluster_sum: Option<Var> = None;
    for (i, (&xa, cw)) in streams.iter().zip(&w.sca).enumerate() {
        let out = spatial_cluster_attention(tape, xa, cw, trace, &format!("{label}.sca{i}"))?;
        cluster_sum = Some(match cluster_sum {
            Some(acc) => tape.add(acc, out)?,
            None => out,
        });
    }
    parts.extend(cluster_sum);
    parts.push(temporal_self_attention(tape, x, &w.tsa, trace, &format!("{label}.tsa"))?);
    parts.push(temporal_aggregation_attention(
        tape,
        x,
        time.vector,
        &w.taa,
        trace,
        &format!("{label}.taa"),
    )?);
    let fused = tape.concat_last(&parts)?;
    let fused = tape.matmul(fused, w.w_o)?;
    let fused = tape.add(fused, x)?;
    let h = tape.layer_norm(fused, w.norm1.0, w.norm1.1)?;
    let m = tape.matmul(h, w.w1)?;
    let m = tape.add(m, w.b1)?;
    let m = tape.gelu(m);
    let m = tape.matmul(m, w.w2)?;
    let m = tape.add(m, w.b2)?;
    let m = tape.add(m, h)?;
    tape.layer_norm(m, w.norm2.0, w.norm2.1)
}

/// Result of [`AdFormer::forward`].
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `B x H x N x D`, normalised scale.
    pub prediction: Var,
    pub trace: Trace,
}

/// The forecaster: configuration, parameters, and the fixed cluster maps.
#[derive(Debug, Clone)]
pub struct AdFormer<T> {
    config: ModelConfig,
    n_regions: usize,
    params: ModelParameters<T>,
    /// Row-major `M_i x N` aggregation matrices.
    cluster_maps: Vec<DiffArray<T>>,
}

impl<T: Real> AdFormer<T> {
    /// Freshly initialised model.
    pub fn new(config: &ModelConfig, n_regions: usize, hierarchy: &ClusterHierarchy, seed: u64) -> Result<Self> {
        let params = init_parameters(config, n_regions, hierarchy, seed)?.cast();
        Self::from_parameters(config, n_regions, hierarchy, params)
    }

    pub fn from_parameters(
        config: &ModelConfig,
        n_regions: usize,
        hierarchy: &ClusterHierarchy,
        params: ModelParameters<T>,
    ) -> Result<Self> {
        config.validate()?;
        check_hierarchy(config, n_regions, hierarchy)?;
        check_layout(&params, config, n_regions)?;
        let cluster_maps = hierarchy
            .levels
            .iter()
            .map(|level| {
                let mut map = level.cluster_map();
                if config.aggregation == Aggregation::Mean {
                    for (row, size) in map.chunks_mut(n_regions).zip(level.partition.sizes()) {
                        row.iter_mut().for_each(|v| *v /= size as f64);
                    }
                }
                DiffArray::from_f64(vec![level.n_clusters(), n_regions], &map)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            config: config.clone(),
            n_regions,
            params,
            cluster_maps,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn params(&self) -> &ModelParameters<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParameters<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ModelParameters<T> {
        self.params
    }

    /// Places every parameter on `tape` as a trainable leaf, in registry
    /// order.
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.arrays().iter().map(|a| tape.param(a.clone())).collect()
    }

    fn var(&self, vars: &[Var], name: &str) -> Var {
        vars[self.params.position(name).expect("layout checked at construction")]
    }

    fn layer_weights(&self, vars: &[Var], l: usize) -> LayerWeights {
        let p = |s: &str| self.var(vars, &format!("layer{l}.{s}"));
        LayerWeights {
            sda: DifferentialWeights {
                w_q: p("sda.w_q"),
                w_k: p("sda.w_k"),
                w_v: p("sda.w_v"),
                lambda_q1: p("sda.lambda_q1"),
                lambda_k1: p("sda.lambda_k1"),
                lambda_q2: p("sda.lambda_q2"),
                lambda_k2: p("sda.lambda_k2"),
            },
            sca: (0..self.config.level_counts.len())
                .map(|i| ClusterWeights {
                    w_q: p(&format!("sca{i}.w_q")),
                    w_k: p(&format!("sca{i}.w_k")),
                    w_v: p(&format!("sca{i}.w_v")),
                    sep: p(&format!("sca{i}.sep")),
                })
                .collect(),
            tsa: AttentionWeights {
                w_q: p("tsa.w_q"),
                w_k: p("tsa.w_k"),
                w_v: p("tsa.w_v"),
            },
            taa: AggregationWeights {
                query: p("taa.query"),
                w_k: p("taa.w_k"),
                w_v: p("taa.w_v"),
                w_sep: p("taa.w_sep"),
            },
            w_o: p("w_o"),
            norm1: (p("norm1.gain"), p("norm1.bias")),
            w1: p("mlp.w1"),
            b1: p("mlp.b1"),
            w2: p("mlp.w2"),
            b2: p("mlp.b2"),
            norm2: (p("norm2.gain"), p("norm2.bias")),
        }
    }

    /// Full forward pass on `batch.inputs` using parameter handles `vars`
    /// (as returned by [`AdFormer::bind`], or any leaves in registry order).
    pub fn forward(&self, tape: &mut Tape<T>, vars: &[Var], batch: &ForecastBatch) -> Result<ForwardOutput> {
        let c = &self.config;
        if vars.len() != self.params.len() {
            return Err(Error::shape(format!(
                "{} parameter handles for {} parameters",
                vars.len(),
                self.params.len()
            )));
        }
        if (batch.input_steps, batch.regions, batch.features) != (c.input_steps, self.n_regions, c.features) {
            return Err(Error::shape(format!(
                "batch geometry (T={}, N={}, D={}) does not match model (T={}, N={}, D={})",
                batch.input_steps, batch.regions, batch.features, c.input_steps, self.n_regions, c.features
            )));
        }
        let (b, t, n, d) = (batch.batch, c.input_steps, self.n_regions, c.hidden);
        let x = tape.constant(DiffArray::from_f64(
            vec![b, t, n, c.features],
            &batch.inputs,
        )?);
        let time = TimeInputs::new(tape, &batch.input_time, b, t, d)?;
        let ew = EmbeddingWeights {
            w_raw: self.var(vars, "embed.w_raw"),
            w_tod: self.var(vars, "embed.w_tod"),
            w_dow: self.var(vars, "embed.w_dow"),
        };
        let spatial = self.var(vars, "embed.spatial");
        let mut h = embed(tape, x, &time, &ew, spatial)?;
        let streams = self
            .cluster_maps
            .iter()
            .enumerate()
            .map(|(i, map)| {
                let map = tape.constant(map.clone());
                let s = self.var(vars, &format!("embed.level{i}.spatial"));
                aggregate_stream(tape, x, map, &time, &ew, s)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut trace = Trace::default();
        for l in 0..c.layers {
            let w = self.layer_weights(vars, l);
            h = encoder_layer(tape, h, &streams, &time, &w, c.lambda_init, &mut trace, &format!("layer{l}"))?;
        }
        let h = tape.permute(h, &[0, 2, 1, 3])?;
        let h = tape.reshape(h, &[b, n, t * d])?;
        let out = tape.matmul(h, self.var(vars, "head.w"))?;
        let out = tape.add(out, self.var(vars, "head.b"))?;
        let out = tape.reshape(out, &[b, n, c.horizon, c.features])?;
        let prediction = tape.permute(out, &[0, 2, 1, 3])?;
        Ok(ForwardOutput { prediction, trace })
    }

    /// Normalised predictions `B x H x N x D` without recording gradients.
    pub fn predict(&self, batch: &ForecastBatch) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self
            .params
            .arrays()
            .iter()
            .map(|a| tape.constant(a.clone()))
            .collect();
        let out = self.forward(&mut tape, &vars, batch)?;
        Ok(tape.value(out.prediction).to_f64_vec())
    }
}
