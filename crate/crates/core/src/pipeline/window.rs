use crate::pipeline::{build_time_features, DemandTensor, Normalizer, TIME_FEATURES};
use crate::{Error, Result};

/// A batch of (input window, target window) pairs.
///
/// Layouts are row-major: inputs `B x T x N x D`, targets `B x H x N x D`,
/// time vectors `B x steps x 8` (time of day, then the day-of-week one-hot;
/// identical for every region).
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastBatch {
    pub batch: usize,
    pub input_steps: usize,
    pub horizon: usize,
    pub regions: usize,
    pub features: usize,
    /// Normalised inputs.
    pub inputs: Vec<f64>,
    /// Inputs in raw demand units.
    pub raw_inputs: Vec<f64>,
    pub input_time: Vec<f64>,
    /// Targets in raw demand units.
    pub targets: Vec<f64>,
    pub target_time: Vec<f64>,
    /// Epoch seconds of each target step, `B x H`.
    pub target_timestamps: Vec<i64>,
}

impl ForecastBatch {
    pub fn input_shape(&self) -> [usize; 4] {
        [self.batch, self.input_steps, self.regions, self.features]
    }

    pub fn target_shape(&self) -> [usize; 4] {
        [self.batch, self.horizon, self.regions, self.features]
    }

    /// Concatenates samples along the batch axis.
    pub fn stack(parts: &[&ForecastBatch]) -> Result<ForecastBatch> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("cannot stack zero samples"))?;
        let mut out = ForecastBatch {
            batch: 0,
            input_steps: first.input_steps,
            horizon: first.horizon,
            regions: first.regions,
            features: first.features,
            inputs: Vec::new(),
            raw_inputs: Vec::new(),
            input_time: Vec::new(),
            targets: Vec::new(),
            target_time: Vec::new(),
            target_timestamps: Vec::new(),
        };
        for p in parts {
            if (p.input_steps, p.horizon, p.regions, p.features)
                != (out.input_steps, out.horizon, out.regions, out.features)
            {
                return Err(Error::shape("stacked samples disagree on window geometry"));
            }
            out.batch += p.batch;
            out.inputs.extend_from_slice(&p.inputs);
            out.raw_inputs.extend_from_slice(&p.raw_inputs);
            out.input_time.extend_from_slice(&p.input_time);
            out.targets.extend_from_slice(&p.targets);
            out.target_time.extend_from_slice(&p.target_time);
            out.target_timestamps.extend_from_slice(&p.target_timestamps);
        }
        Ok(out)
    }
}

/// Sliding windows with stride 1: `len - T - H + 1` samples, each a batch of
/// one. Inputs are normalised with `normalizer`; targets stay in raw units.
pub fn make_windows(
    split: &DemandTensor,
    input_steps: usize,
    horizon: usize,
    normalizer: &Normalizer,
) -> Result<Vec<ForecastBatch>> {
    if input_steps == 0 || horizon == 0 {
        return Err(Error::Config("window and horizon must be positive".into()));
    }
    if normalizer.n_features() != split.n_features() {
        return Err(Error::shape(format!(
            "normaliser has {} features, tensor has {}",
            normalizer.n_features(),
            split.n_features()
        )));
    }
    let len = split.steps();
    if len < input_steps + horizon {
        return Err(Error::contract(format!(
            "split of {len} steps is shorter than T + H = {}",
            input_steps + horizon
        )));
    }
    let timestamps = split.timestamps();
    let tf = build_time_features(&timestamps, split.n_regions(), &split.utc_offset());
    let step_time = |t: usize| tf.step_vector(t);
    let count = len - input_steps - horizon + 1;
    let mut out = Vec::with_capacity(count);
    for s in 0..count {
        let mut raw_inputs = Vec::new();
        let mut input_time = Vec::with_capacity(input_steps * TIME_FEATURES);
        for t in s..s + input_steps {
            raw_inputs.extend_from_slice(split.step_values(t));
            input_time.extend_from_slice(&step_time(t));
        }
        let mut targets = Vec::new();
        let mut target_time = Vec::with_capacity(horizon * TIME_FEATURES);
        let mut target_timestamps = Vec::with_capacity(horizon);
        for t in s + input_steps..s + input_steps + horizon {
            targets.extend_from_slice(split.step_values(t));
            target_time.extend_from_slice(&step_time(t));
            target_timestamps.push(timestamps[t]);
        }
        out.push(ForecastBatch {
            batch: 1,
            input_steps,
            horizon,
            regions: split.n_regions(),
            features: split.n_features(),
            inputs: normalizer.normalize_slice(&raw_inputs),
            raw_inputs,
            input_time,
            targets,
            target_time,
            target_timestamps,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(len: usize, regions: usize) -> DemandTensor {
        DemandTensor::new(
            (0..len * regions).map(|v| v as f64).collect(),
            len,
            (0..regions).map(|r| format!("r{r}")).collect(),
            1,
            0,
            1800,
            0,
        )
        .unwrap()
    }

    #[test]
    fn window_counts() {
        let t = ramp(100, 2);
        let n = Normalizer::fit(&t);
        assert_eq!(make_windows(&t, 6, 6, &n).unwrap().len(), 89);
        assert_eq!(make_windows(&t, 6, 1, &n).unwrap().len(), 94);
        let short = ramp(12, 2);
        assert_eq!(make_windows(&short, 6, 6, &n).unwrap().len(), 1);
        assert!(make_windows(&ramp(11, 2), 6, 6, &n).is_err());
    }

    #[test]
    fn targets_are_raw_slices_and_windows_are_contiguous() {
        let t = ramp(30, 3);
        let n = Normalizer::fit(&t);
        let w = make_windows(&t, 4, 2, &n).unwrap();
        for (s, b) in w.iter().enumerate() {
            let expect: Vec<f64> = (s + 4..s + 6).flat_map(|k| t.step_values(k).to_vec()).collect();
            assert_eq!(b.targets, expect);
            assert_eq!(b.target_timestamps[0], t.timestamp(s + 4));
            assert_eq!(b.raw_inputs[..3], *t.step_values(s));
            assert!((n.denormalize(b.inputs[0], 0) - b.raw_inputs[0]).abs() < 1e-9);
        }
        let stacked = ForecastBatch::stack(&[&w[0], &w[1]]).unwrap();
        assert_eq!(stacked.batch, 2);
        assert_eq!(stacked.input_shape(), [2, 4, 3, 1]);
        assert_eq!(stacked.targets.len(), 2 * 2 * 3);
    }
}
