//! Thresholded error metrics, naive baselines and report rendering.

mod baselines;
mod metrics;
mod report;

pub use baselines::{persistence_baseline, HistoricalAverage};
pub use metrics::{thresholded_metrics, HorizonMetrics, MetricReport, Metrics, DEFAULT_THRESHOLD};
pub use report::{format_metric, EvaluationReport, NamedReport};
