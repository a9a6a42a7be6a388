use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Minimum true demand for a cell to count towards the metrics.
pub const DEFAULT_THRESHOLD: f64 = 5.0;

/// MAE, RMSE and MAPE (percent) over the cells whose target meets the
/// threshold. The three errors are `None` when no cell qualifies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    pub mape: Option<f64>,
    /// All cells considered.
    pub cells: usize,
    /// Cells at or above the threshold.
    pub evaluated: usize,
    /// Cells excluded by the threshold.
    pub masked: usize,
}

impl Metrics {
    pub fn is_defined(&self) -> bool {
        self.evaluated > 0
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Accumulator {
    abs: f64,
    sq: f64,
    pct: f64,
    evaluated: usize,
    cells: usize,
}

impl Accumulator {
    fn push(&mut self, pred: f64, target: f64, threshold: f64) {
        self.cells += 1;
        if target >= threshold {
            let e = (pred - target).abs();
            self.abs += e;
            self.sq += e * e;
            self.pct += e / target;
            self.evaluated += 1;
        }
    }

    fn finish(self) -> Metrics {
        let n = self.evaluated as f64;
        let defined = self.evaluated > 0;
        Metrics {
            mae: defined.then(|| self.abs / n),
            rmse: defined.then(|| (self.sq / n).sqrt()),
            mape: defined.then(|| self.pct / n * 100.0),
            cells: self.cells,
            evaluated: self.evaluated,
            masked: self.cells - self.evaluated,
        }
    }
}

fn check_lengths(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    Ok(())
}

/// Metrics over cells with `target >= threshold`; both inputs in raw units.
pub fn thresholded_metrics(pred: &[f64], target: &[f64], threshold: f64) -> Result<Metrics> {
    check_lengths(pred, target)?;
    let mut acc = Accumulator::default();
    for (&p, &t) in pred.iter().zip(target) {
        acc.push(p, t, threshold);
    }
    Ok(acc.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    /// 1-based horizon step.
    pub step: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
}

/// Per-horizon and aggregate metrics for one forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub threshold: f64,
    pub horizons: Vec<HorizonMetrics>,
    pub overall: Metrics,
}

impl MetricReport {
    /// `pred` and `target` are `B x H x N x D`, raw units.
    pub fn compute(pred: &[f64], target: &[f64], shape: [usize; 4], threshold: f64) -> Result<Self> {
        check_lengths(pred, target)?;
        let [b, h, n, d] = shape;
        if b * h * n * d != target.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} does not cover {} cells",
                target.len()
            )));
        }
        let mut per = vec![Accumulator::default(); h];
        let mut all = Accumulator::default();
        for (i, (&p, &t)) in pred.iter().zip(target).enumerate() {
            let step = (i / (n * d)) % h;
            per[step].push(p, t, threshold);
            all.push(p, t, threshold);
        }
        Ok(Self {
            threshold,
            horizons: per
                .into_iter()
                .enumerate()
                .map(|(s, a)| HorizonMetrics {
                    step: s + 1,
                    metrics: a.finish(),
                })
                .collect(),
            overall: all.finish(),
        })
    }

    /// Metrics at a 1-based horizon step.
    pub fn horizon(&self, step: usize) -> Option<&Metrics> {
        self.horizons.iter().find(|h| h.step == step).map(|h| &h.metrics)
    }
}
