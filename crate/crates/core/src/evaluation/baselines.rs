use chrono::{DateTime, Datelike, Timelike};

use crate::pipeline::{DemandTensor, ForecastBatch, SECONDS_PER_DAY};
use crate::{Error, Result};

/// Repeats the last observed raw input step at every horizon step.
pub fn persistence_baseline(batch: &ForecastBatch) -> Vec<f64> {
    let cell = batch.regions * batch.features;
    let window = batch.input_steps * cell;
    let mut out = Vec::with_capacity(batch.batch * batch.horizon * cell);
    for b in 0..batch.batch {
        let last = &batch.raw_inputs[b * window + window - cell..(b + 1) * window];
        for _ in 0..batch.horizon {
            out.extend_from_slice(last);
        }
    }
    out
}

/// Training-split mean per (region, time-of-day slot, day of week), with the
/// region mean as the fallback for slots never observed.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalAverage {
    bin_width: i64,
    utc_offset_secs: i32,
    slots_per_day: usize,
    cell: usize,
    slot_means: Vec<Option<f64>>,
    region_means: Vec<f64>,
}

impl HistoricalAverage {
    pub fn fit(train: &DemandTensor) -> Result<Self> {
        let span = train.steps() as i64 * train.bin_width();
        if span < 7 * SECONDS_PER_DAY {
            return Err(Error::contract(format!(
                "historical average needs at least one week of training data, got {span} s"
            )));
        }
        let slots_per_day = (SECONDS_PER_DAY as usize).div_ceil(train.bin_width() as usize);
        let cell = train.n_regions() * train.n_features();
        let mut ha = Self {
            bin_width: train.bin_width(),
            utc_offset_secs: train.utc_offset().local_minus_utc(),
            slots_per_day,
            cell,
            slot_means: Vec::new(),
            region_means: vec![0.0; cell],
        };
        let mut sums = vec![0.0; 7 * slots_per_day * cell];
        let mut counts = vec![0usize; 7 * slots_per_day];
        for t in 0..train.steps() {
            let key = ha.slot(train.timestamp(t));
            counts[key] += 1;
            for (c, v) in train.step_values(t).iter().enumerate() {
                sums[key * cell + c] += v;
                ha.region_means[c] += v;
            }
        }
        ha.region_means.iter_mut().for_each(|m| *m /= train.steps() as f64);
        ha.slot_means = sums
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let n = counts[i / cell];
                (n > 0).then(|| s / n as f64)
            })
            .collect();
        Ok(ha)
    }

    fn slot(&self, timestamp: i64) -> usize {
        let local = DateTime::from_timestamp(timestamp, 0)
            .expect("timestamp within chrono range")
            .with_timezone(&chrono::FixedOffset::east_opt(self.utc_offset_secs).expect("valid offset"));
        let tod = local.num_seconds_from_midnight() as usize / self.bin_width as usize;
        local.weekday().num_days_from_monday() as usize * self.slots_per_day + tod
    }

    /// Forecast for each cell of one future timestamp.
    pub fn predict_step(&self, timestamp: i64) -> Vec<f64> {
        let key = self.slot(timestamp);
        (0..self.cell)
            .map(|c| self.slot_means[key * self.cell + c].unwrap_or(self.region_means[c]))
            .collect()
    }

    /// `B x H x N x D` forecasts for the target steps of `batch`.
    pub fn predict(&self, batch: &ForecastBatch) -> Result<Vec<f64>> {
        if batch.regions * batch.features != self.cell {
            return Err(Error::shape(format!(
                "batch has {} cells per step, baseline was fitted on {}",
                batch.regions * batch.features,
                self.cell
            )));
        }
        Ok(batch
            .target_timestamps
            .iter()
            .flat_map(|&ts| self.predict_step(ts))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{make_windows, Normalizer};

    const BIN: i64 = 1800;
    // Monday 2024-01-01 00:00 UTC
    const START: i64 = 1_704_067_200;

    fn tensor(steps: usize, regions: usize, f: impl Fn(usize, usize) -> f64) -> DemandTensor {
        let values = (0..steps * regions).map(|i| f(i / regions, i % regions)).collect();
        DemandTensor::new(
            values,
            steps,
            (0..regions).map(|r| format!("r{r}")).collect(),
            1,
            START,
            BIN,
            0,
        )
        .unwrap()
    }

    fn windows(t: &DemandTensor, input: usize, horizon: usize) -> Vec<ForecastBatch> {
        make_windows(t, input, horizon, &Normalizer::fit(t)).unwrap()
    }

    #[test]
    fn persistence_repeats_last_step() {
        let t = tensor(10, 2, |s, r| (s + 10 * r) as f64);
        let w = windows(&t, 4, 3);
        let p = persistence_baseline(&w[0]);
        assert_eq!(p, vec![3.0, 13.0, 3.0, 13.0, 3.0, 13.0]);
        // slope-1 ramp: errors 1, 2, 3
        let mae: f64 = p.iter().zip(&w[0].targets).map(|(a, b)| (a - b).abs()).sum::<f64>() / 6.0;
        assert_eq!(mae, 2.0);
    }

    #[test]
    fn persistence_is_exact_on_constant_series() {
        let t = tensor(12, 3, |_, r| 7.0 + r as f64);
        let w = windows(&t, 3, 2);
        let stacked = ForecastBatch::stack(&w.iter().collect::<Vec<_>>()).unwrap();
        assert_eq!(persistence_baseline(&stacked), stacked.targets);
    }

    #[test]
    fn weekly_periodic_signal_is_recovered() {
        let week = 7 * 48;
        let f = |s: usize, r: usize| ((s % week) as f64 * 0.37).sin() * 5.0 + 10.0 + r as f64;
        let t = tensor(3 * week, 2, f);
        let ha = HistoricalAverage::fit(&t.slice_steps(0..2 * week).unwrap()).unwrap();
        let test = t.slice_steps(2 * week..3 * week).unwrap();
        for w in windows(&test, 6, 3) {
            let p = ha.predict(&w).unwrap();
            for (a, b) in p.iter().zip(&w.targets) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weekday_weekend_levels() {
        // Saturday and Sunday at 2, weekdays at 9
        let f = |s: usize, _| if (s / 48) % 7 >= 5 { 2.0 } else { 9.0 };
        let t = tensor(14 * 48, 1, f);
        let ha = HistoricalAverage::fit(&t).unwrap();
        assert_eq!(ha.predict_step(START + 5 * 86_400 + 3600), vec![2.0]);
        assert_eq!(ha.predict_step(START + 2 * 86_400), vec![9.0]);
        let c = tensor(7 * 48, 2, |_, r| 4.0 + r as f64);
        let ha = HistoricalAverage::fit(&c).unwrap();
        assert_eq!(ha.predict_step(START + 123 * BIN), vec![4.0, 5.0]);
    }

    #[test]
    fn unseen_slot_falls_back_to_region_mean() {
        // one week of hourly bins covers every slot
        let values: Vec<f64> = (0..7 * 24).map(|s| s as f64).collect();
        let t = DemandTensor::new(values, 7 * 24, vec!["a".into()], 1, START, 3600, 0).unwrap();
        let ha = HistoricalAverage::fit(&t).unwrap();
        assert_eq!(ha.predict_step(START + 3600), vec![1.0]);
        let mean = (0..168).sum::<usize>() as f64 / 168.0;
        assert_eq!(HistoricalAverage { slot_means: vec![None; 168], ..ha }.predict_step(START), vec![mean]);
    }

    #[test]
    fn short_training_split_is_rejected() {
        let t = tensor(48, 1, |_, _| 1.0);
        assert!(HistoricalAverage::fit(&t).is_err());
    }
}
