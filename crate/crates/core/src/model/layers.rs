use crate::diffcore::{Real, Tape, Var};
use crate::Result;

/// Softmax outputs and lambda values recorded during a forward pass.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub softmax: Vec<(String, Var)>,
    pub lambdas: Vec<Var>,
}

impl Trace {
    fn softmax<T: Real>(&mut self, tape: &mut Tape<T>, label: &str, logits: Var) -> Result<Var> {
        let s = tape.softmax_last(logits)?;
        self.softmax.push((label.to_string(), s));
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DifferentialWeights {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub lambda_q1: Var,
    pub lambda_k1: Var,
    pub lambda_q2: Var,
    pub lambda_k2: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct ClusterWeights {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    /// `M x N` separation matrix.
    pub sep: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct AggregationWeights {
    /// `N x P x d` learnable queries.
    pub query: Var,
    pub w_k: Var,
    pub w_v: Var,
    /// `8 x P`.
    pub w_sep: Var,
}

/// `exp(q1·k1) - exp(q2·k2) + init` as a `1 x 1` value. Each vector is
/// `1 x d/2`.
pub fn lambda_value<T: Real>(
    tape: &mut Tape<T>,
    q1: Var,
    k1: Var,
    q2: Var,
    k2: Var,
    init: f64,
) -> Result<Var> {
    let a = tape.matmul_nt(q1, k1)?;
    let b = tape.matmul_nt(q2, k2)?;
    for v in [a, b] {
        let dot = tape.value(v).data()[0].to_f64_lossless();
        if dot > 700.0 {
            return Err(crate::Error::Numeric(format!(
                "lambda exponent {dot} overflows"
            )));
        }
    }
    let ea = tape.exp(a);
    let eb = tape.exp(b);
    let diff = tape.sub(ea, eb)?;
    Ok(tape.add_scalar(diff, T::lit(init)))
}

/// `softmax(l1) - lambda * softmax(l2)`, softmax over the last axis.
pub fn differential_weights<T: Real>(
    tape: &mut Tape<T>,
    logits1: Var,
    logits2: Var,
    lambda: Var,
    trace: &mut Trace,
    label: &str,
) -> Result<Var> {
    let s1 = trace.softmax(tape, &format!("{label}.1"), logits1)?;
    let s2 = trace.softmax(tape, &format!("{label}.2"), logits2)?;
    let s2 = tape.mul(s2, lambda)?;
    tape.sub(s1, s2)
}

/// Differential attention across regions, independently per (batch, step).
/// `x` is `B x T x N x d`.
pub fn spatial_differential_attention<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    w: &DifferentialWeights,
    lambda_init: f64,
    trace: &mut Trace,
    label: &str,
) -> Result<Var> {
    let d = *tape.shape(x).last().unwrap();
    let h = d / 2;
    let q = tape.matmul(x, w.w_q)?;
    let k = tape.matmul(x, w.w_k)?;
    let v = tape.matmul(x, w.w_v)?;
    let rank = tape.shape(x).len();
    let q1 = tape.slice(q, rank - 1, 0, h)?;
    let q2 = tape.slice(q, rank - 1, h, h)?;
    let k1 = tape.slice(k, rank - 1, 0, h)?;
    let k2 = tape.slice(k, rank - 1, h, h)?;
    let scale = T::lit(1.0 / (h as f64).sqrt());
    let a1 = tape.matmul_nt(q1, k1)?;
    let a1 = tape.scale(a1, scale);
    let a2 = tape.matmul_nt(q2, k2)?;
    let a2 = tape.scale(a2, scale);
    let lambda = lambda_value(tape, w.lambda_q1, w.lambda_k1, w.lambda_q2, w.lambda_k2, lambda_init)?;
    trace.lambdas.push(lambda);
    let weights = differential_weights(tape, a1, a2, lambda, trace, label)?;
    tape.matmul(weights, v)
}

/// Attention from regions to clusters. `xa` is the aggregated stream
/// `B x T x M x d`; the result is `B x T x N x d`.
pub fn spatial_cluster_attention<T: Real>(
    tape: &mut Tape<T>,
    xa: Var,
    w: &ClusterWeights,
    trace: &mut Trace,
    label: &str,
) -> Result<Var> {
    let d = *tape.shape(xa).last().unwrap();
    let q = tape.matmul(xa, w.w_q)?;
    let k = tape.matmul(xa, w.w_k)?;
    let v = tape.matmul(xa, w.w_v)?;
    let scores = tape.matmul_nt(q, k)?;
    let scores = tape.scale(scores, T::lit(1.0 / (d as f64).sqrt()));
    let routed = tape.matmul_ex(w.sep, scores, true, false)?;
    let weights = trace.softmax(tape, label, routed)?;
    tape.matmul(weights, v)
}

/// Self-attention across steps, independently per (batch, region).
pub fn temporal_self_attention<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    w: &AttentionWeights,
    trace: &mut Trace,
    label: &str,
) -> Result<Var> {
    let d = *tape.shape(x).last().unwrap();
    let xt = tape.permute(x, &[0, 2, 1, 3])?;
    let q = tape.matmul(xt, w.w_q)?;
    let k = tape.matmul(xt, w.w_k)?;
    let v = tape.matmul(xt, w.w_v)?;
    let scores = tape.matmul_nt(q, k)?;
    let scores = tape.scale(scores, T::lit(1.0 / (d as f64).sqrt()));
    let weights = trace.softmax(tape, label, scores)?;
    let out = tape.matmul(weights, v)?;
    tape.permute(out, &[0, 2, 1, 3])
}

/// Slot-query attention across steps. `time` holds the per-step time
/// vectors `B x T x 8`; they are shared by every region.
pub fn temporal_aggregation_attention<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    time: Var,
    w: &AggregationWeights,
    trace: &mut Trace,
    label: &str,
) -> Result<Var> {
    let d = *tape.shape(x).last().unwrap();
    let xt = tape.permute(x, &[0, 2, 1, 3])?;
    let k = tape.matmul(xt, w.w_k)?;
    let v = tape.matmul(xt, w.w_v)?;
    // (N x P x d) against (B x N x T x d) -> B x N x P x T
    let scores = tape.matmul_nt(w.query, k)?;
    let scores = tape.scale(scores, T::lit(1.0 / (d as f64).sqrt()));
    // B x T x P, lifted to B x 1 x T x P so it broadcasts over regions
    let restore = tape.matmul(time, w.w_sep)?;
    let s = tape.shape(restore).to_vec();
    let restore = tape.reshape(restore, &[s[0], 1, s[1], s[2]])?;
    let logits = tape.matmul(restore, scores)?;
    let weights = trace.softmax(tape, label, logits)?;
    let out = tape.matmul(weights, v)?;
    tape.permute(out, &[0, 2, 1, 3])
}
