use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::evaluation::{MetricReport, Metrics};

/// Reports for several forecasters on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset: String,
    pub threshold: f64,
    /// Horizon steps shown in the table.
    pub horizons: Vec<usize>,
    pub entries: Vec<NamedReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedReport {
    pub name: String,
    pub report: MetricReport,
}

/// Table cell text for one metric value.
pub fn format_metric(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "n/a".to_string(),
    }
}

impl EvaluationReport {
    pub fn new(dataset: impl Into<String>, threshold: f64, horizons: Vec<usize>) -> Self {
        Self {
            dataset: dataset.into(),
            threshold,
            horizons,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, report: MetricReport) {
        self.entries.push(NamedReport {
            name: name.into(),
            report,
        });
    }

    pub fn get(&self, name: &str) -> Option<&MetricReport> {
        self.entries.iter().find(|e| e.name == name).map(|e| &e.report)
    }

    /// Plain-text table: one row per forecaster, one MAE/RMSE/MAPE column
    /// group per horizon, then the all-horizon aggregate.
    pub fn to_table(&self) -> String {
        let groups: Vec<(String, Option<usize>)> = self
            .horizons
            .iter()
            .map(|&h| (format!("horizon {h}"), Some(h)))
            .chain(std::iter::once(("all".to_string(), None)))
            .collect();
        let name_w = self
            .entries
            .iter()
            .map(|e| e.name.len())
            .chain([self.dataset.len(), 5])
            .max()
            .unwrap_or(5);
        let col = 10;
        let group_w = 3 * col;
        let mut out = String::new();
        let _ = write!(out, "{:<name_w$}", self.dataset);
        for (title, _) in &groups {
            let _ = write!(out, " | {title:^group_w$}");
        }
        out.push('\n');
        let _ = write!(out, "{:<name_w$}", "model");
        for _ in &groups {
            let _ = write!(out, " | {:>col$}{:>col$}{:>col$}", "MAE", "RMSE", "MAPE(%)");
        }
        out.push('\n');
        let rule = name_w + groups.len() * (group_w + 3);
        out.push_str(&"-".repeat(rule));
        out.push('\n');
        for e in &self.entries {
            let _ = write!(out, "{:<name_w$}", e.name);
            for (_, step) in &groups {
                let m = match step {
                    Some(h) => e.report.horizon(*h),
                    None => Some(&e.report.overall),
                };
                let cell = |f: fn(&Metrics) -> Option<f64>| format_metric(m.and_then(f));
                let _ = write!(
                    out,
                    " | {:>col$}{:>col$}{:>col$}",
                    cell(|m| m.mae),
                    cell(|m| m.rmse),
                    cell(|m| m.mape)
                );
            }
            out.push('\n');
        }
        let _ = writeln!(out, "threshold {} (cells with true demand below it are excluded)", self.threshold);
        for e in self.entries.iter().take(1) {
            let _ = writeln!(
                out,
                "evaluated cells {} of {} ({} masked)",
                e.report.overall.evaluated, e.report.overall.cells, e.report.overall.masked
            );
        }
        out
    }
}
