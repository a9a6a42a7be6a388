use serde::{Deserialize, Serialize};

use crate::pipeline::DemandTensor;

const STD_FLOOR: f64 = 1e-8;

/// Per-feature z-score, fitted on the training split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(train: &DemandTensor) -> Self {
        let d = train.n_features();
        let cells = (train.steps() * train.n_regions()) as f64;
        let mut mean = vec![0.0; d];
        for (i, v) in train.values().iter().enumerate() {
            mean[i % d] += v;
        }
        mean.iter_mut().for_each(|m| *m /= cells);
        let mut var = vec![0.0; d];
        for (i, v) in train.values().iter().enumerate() {
            var[i % d] += (v - mean[i % d]).powi(2);
        }
        let std = var
            .into_iter()
            .map(|s| (s / cells).sqrt().max(STD_FLOOR))
            .collect();
        Self { mean, std }
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, value: f64, feature: usize) -> f64 {
        (value - self.mean[feature]) / self.std[feature]
    }

    pub fn denormalize(&self, value: f64, feature: usize) -> f64 {
        value * self.std[feature] + self.mean[feature]
    }

    /// Normalises a buffer whose innermost axis is the feature axis.
    pub fn normalize_slice(&self, values: &[f64]) -> Vec<f64> {
        let d = self.n_features();
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| self.normalize(v, i % d))
            .collect()
    }

    pub fn denormalize_slice(&self, values: &[f64]) -> Vec<f64> {
        let d = self.n_features();
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| self.denormalize(v, i % d))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tensor(values: Vec<f64>) -> DemandTensor {
        let n = values.len();
        DemandTensor::new(values, n, vec!["r".into()], 1, 0, 60, 0).unwrap()
    }

    #[test]
    fn hand_z_score() {
        let n = Normalizer::fit(&tensor(vec![0.0, 10.0]));
        assert_eq!((n.mean[0], n.std[0]), (5.0, 5.0));
        assert_eq!(n.normalize_slice(&[0.0, 10.0]), vec![-1.0, 1.0]);
    }

    #[test]
    fn constant_channel_normalises_to_zero() {
        let n = Normalizer::fit(&tensor(vec![4.0; 6]));
        assert_eq!(n.std[0], STD_FLOOR);
        assert!(n.normalize_slice(&[4.0; 6]).iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn round_trip(values in proptest::collection::vec(0.0f64..1e4, 2..40), probe in 0.0f64..1e4) {
            let n = Normalizer::fit(&tensor(values));
            prop_assert!((n.denormalize(n.normalize(probe, 0), 0) - probe).abs() < 1e-9);
        }
    }
}
