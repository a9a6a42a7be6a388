//! Planted-group demand fixtures.
//!
//! Regions belong to one of a few groups. A group has its own base level,
//! daily shape and weekend factor, plus a slowly varying multiplicative
//! AR(1) factor shared by its members; each cell adds Poisson count noise.

use std::f64::consts::PI;
use std::io::Write;

use chrono::{DateTime, FixedOffset, SecondsFormat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::pipeline::{DemandTensor, SECONDS_PER_DAY};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub regions: usize,
    pub groups: usize,
    pub days: usize,
    pub bin_width: i64,
    /// Epoch second of the first bin (local midnight).
    pub start: i64,
    pub utc_offset_secs: i32,
    /// Persistence of the group factor per step.
    pub ar_coefficient: f64,
    /// Innovation scale of the group factor (log space).
    pub ar_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            regions: 12,
            groups: 3,
            days: 28,
            bin_width: 1800,
            // Monday 2024-01-01 00:00 UTC
            start: 1_704_067_200,
            utc_offset_secs: 0,
            ar_coefficient: 0.9,
            ar_noise: 0.03,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn steps(&self) -> usize {
        self.days * (SECONDS_PER_DAY / self.bin_width) as usize
    }

    /// Planted group of a region.
    pub fn group_of(&self, region: usize) -> usize {
        region % self.groups
    }

    pub fn region_id(&self, region: usize) -> String {
        format!("r{region:02}")
    }
}

struct GroupProfile {
    base: f64,
    amplitude: f64,
    phase: f64,
    weekend: f64,
}

/// Generates the fixture as a single-feature demand tensor of whole counts.
pub fn synthetic_demand(spec: &SyntheticSpec) -> Result<DemandTensor> {
    if spec.regions == 0 || spec.groups == 0 || spec.groups > spec.regions || spec.days == 0 {
        return Err(Error::Config(format!(
            "synthetic fixture needs 1 <= groups <= regions and days > 0, got {spec:?}"
        )));
    }
    if spec.bin_width <= 0 || SECONDS_PER_DAY % spec.bin_width != 0 {
        return Err(Error::Config(format!(
            "bin width {}s must divide one day evenly",
            spec.bin_width
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let profiles: Vec<GroupProfile> = (0..spec.groups)
        .map(|g| GroupProfile {
            base: 20.0 + 15.0 * g as f64 + rng.random_range(0.0..5.0),
            amplitude: rng.random_range(0.45..0.7),
            phase: 2.0 * PI * g as f64 / spec.groups as f64 + rng.random_range(-0.3..0.3),
            weekend: rng.random_range(0.55..1.3),
        })
        .collect();
    let scales: Vec<f64> = (0..spec.regions).map(|_| rng.random_range(0.8..1.2)).collect();
    let innovation = Normal::new(0.0, spec.ar_noise.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let per_day = (SECONDS_PER_DAY / spec.bin_width) as usize;
    let steps = spec.steps();
    let mut factor = vec![0.0f64; spec.groups];
    let mut values = Vec::with_capacity(steps * spec.regions);
    for t in 0..steps {
        for z in factor.iter_mut() {
            *z = spec.ar_coefficient * *z + innovation.sample(&mut rng);
        }
        let tod = (t % per_day) as f64 / per_day as f64;
        let dow = (t / per_day) % 7;
        for (r, scale) in scales.iter().enumerate() {
            let g = spec.group_of(r);
            let p = &profiles[g];
            let weekly = if dow >= 5 { p.weekend } else { 1.0 };
            let daily = 1.0 + p.amplitude * (2.0 * PI * tod + p.phase).sin();
            let mean = scale * p.base * daily * weekly * factor[g].exp();
            let count = Poisson::new(mean.max(1e-6))
                .map_err(|e| Error::Config(e.to_string()))?
                .sample(&mut rng);
            values.push(count);
        }
    }
    let ids = (0..spec.regions).map(|r| spec.region_id(r)).collect();
    DemandTensor::new(values, steps, ids, 1, spec.start, spec.bin_width, spec.utc_offset_secs)
}

/// Writes a tensor as `timestamp,region_id,count` trip rows, one per cell,
/// stamped one minute into each bin. Ingesting the result with the same bin
/// width and offset reproduces the tensor.
pub fn write_trips_csv<W: Write>(tensor: &DemandTensor, out: W) -> Result<()> {
    let offset = FixedOffset::east_opt(tensor.utc_offset().local_minus_utc()).expect("valid offset");
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "region_id", "count"])?;
    for t in 0..tensor.steps() {
        let ts = DateTime::from_timestamp(tensor.timestamp(t) + 60, 0)
            .expect("timestamp within chrono range")
            .with_timezone(&offset)
            .to_rfc3339_opts(SecondsFormat::Secs, true);
        for (r, id) in tensor.region_ids().iter().enumerate() {
            let v = tensor.value(t, r, 0);
            w.write_record([ts.as_str(), id.as_str(), &format!("{v}")])?;
        }
    }
    w.flush().map_err(Error::Io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{ingest_trips, read_trips_csv};

    #[test]
    fn default_fixture_shape() {
        let spec = SyntheticSpec::default();
        let t = synthetic_demand(&spec).unwrap();
        assert_eq!((t.steps(), t.n_regions(), t.n_features()), (28 * 48, 12, 1));
        assert!(t.values().iter().all(|v| v.fract() == 0.0));
        let mean = t.total() / t.values().len() as f64;
        assert!(mean > 15.0, "{mean}");
        assert_eq!(synthetic_demand(&spec).unwrap(), t);
    }

    #[test]
    fn csv_round_trip() {
        let spec = SyntheticSpec {
            regions: 4,
            groups: 2,
            days: 2,
            utc_offset_secs: 8 * 3600,
            start: 1_704_067_200 - 8 * 3600,
            ..SyntheticSpec::default()
        };
        let t = synthetic_demand(&spec).unwrap();
        let mut buf = Vec::new();
        write_trips_csv(&t, &mut buf).unwrap();
        let offset = FixedOffset::east_opt(8 * 3600).unwrap();
        let recs = read_trips_csv(buf.as_slice(), &offset).unwrap();
        let back = ingest_trips(recs, 1800, offset).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = SyntheticSpec {
            groups: 20,
            ..SyntheticSpec::default()
        };
        assert!(synthetic_demand(&bad).is_err());
        let bad = SyntheticSpec {
            bin_width: 7000,
            ..SyntheticSpec::default()
        };
        assert!(synthetic_demand(&bad).is_err());
    }
}
