use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::archive;
use crate::{Error, Result};

/// Binned demand over (time steps x regions x features).
#[derive(Debug, Clone, PartialEq)]
pub struct DemandTensor {
    values: Vec<f64>,
    steps: usize,
    features: usize,
    region_ids: Vec<String>,
    start: i64,
    bin_width: i64,
    utc_offset: i32,
}

#[derive(Debug, Serialize, Deserialize)]
struct DemandHeader {
    kind: String,
    shape: [usize; 3],
    bin_width_secs: i64,
    start_epoch_secs: i64,
    start: String,
    utc_offset_secs: i32,
    region_ids: Vec<String>,
}

const KIND: &str = "demand";

impl DemandTensor {
    /// `values` is row-major (step, region, feature). `start` is the epoch
    /// second of the first bin; `utc_offset` (seconds east of UTC) fixes the
    /// local calendar used for time features.
    pub fn new(
        values: Vec<f64>,
        steps: usize,
        region_ids: Vec<String>,
        features: usize,
        start: i64,
        bin_width: i64,
        utc_offset: i32,
    ) -> Result<Self> {
        if steps == 0 || region_ids.is_empty() || features == 0 {
            return Err(Error::shape(format!(
                "demand tensor needs positive dimensions, got {steps}x{}x{features}",
                region_ids.len()
            )));
        }
        if values.len() != steps * region_ids.len() * features {
            return Err(Error::shape(format!(
                "{} values for a {steps}x{}x{features} tensor",
                values.len(),
                region_ids.len()
            )));
        }
        if bin_width <= 0 {
            return Err(Error::Config("bin width must be positive".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::contract(format!(
                "demand values must be finite and nonnegative, found {v}"
            )));
        }
        FixedOffset::east_opt(utc_offset)
            .ok_or_else(|| Error::Config(format!("invalid UTC offset {utc_offset}s")))?;
        Ok(Self {
            values,
            steps,
            features,
            region_ids,
            start,
            bin_width,
            utc_offset,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn n_regions(&self) -> usize {
        self.region_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.features
    }

    pub fn region_ids(&self) -> &[String] {
        &self.region_ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn bin_width(&self) -> i64 {
        self.bin_width
    }

    pub fn utc_offset(&self) -> FixedOffset {
        FixedOffset::east_opt(self.utc_offset).expect("validated at construction")
    }

    pub fn timestamp(&self, step: usize) -> i64 {
        self.start + step as i64 * self.bin_width
    }

    pub fn timestamps(&self) -> Vec<i64> {
        (0..self.steps).map(|t| self.timestamp(t)).collect()
    }

    pub fn value(&self, step: usize, region: usize, feature: usize) -> f64 {
        self.values[(step * self.n_regions() + region) * self.features + feature]
    }

    /// All values of one step, (region, feature) row-major.
    pub fn step_values(&self, step: usize) -> &[f64] {
        let w = self.n_regions() * self.features;
        &self.values[step * w..(step + 1) * w]
    }

    pub fn series(&self, region: usize, feature: usize) -> Vec<f64> {
        (0..self.steps)
            .map(|t| self.value(t, region, feature))
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Sub-tensor over a contiguous range of steps.
    pub fn slice_steps(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.steps {
            return Err(Error::shape(format!(
                "step range {range:?} outside 0..{}",
                self.steps
            )));
        }
        let w = self.n_regions() * self.features;
        Ok(Self {
            values: self.values[range.start * w..range.end * w].to_vec(),
            steps: range.len(),
            features: self.features,
            region_ids: self.region_ids.clone(),
            start: self.timestamp(range.start),
            bin_width: self.bin_width,
            utc_offset: self.utc_offset,
        })
    }

    /// Index of the step whose bin starts at `timestamp`, if any.
    pub fn step_of(&self, timestamp: i64) -> Option<usize> {
        let delta = timestamp - self.start;
        if delta < 0 || delta % self.bin_width != 0 {
            return None;
        }
        let t = (delta / self.bin_width) as usize;
        (t < self.steps).then_some(t)
    }

    fn header(&self) -> DemandHeader {
        let start = DateTime::from_timestamp(self.start, 0)
            .map(|d| d.with_timezone(&self.utc_offset()).to_rfc3339())
            .unwrap_or_default();
        DemandHeader {
            kind: KIND.into(),
            shape: [self.steps, self.n_regions(), self.features],
            bin_width_secs: self.bin_width,
            start_epoch_secs: self.start,
            start,
            utc_offset_secs: self.utc_offset,
            region_ids: self.region_ids.clone(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        archive::encode(&self.header(), &self.values)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, values): (DemandHeader, Vec<f64>) = archive::decode(bytes)?;
        Self::from_parts(h, values)
    }

    pub fn write_archive(&self, path: &Path) -> Result<()> {
        archive::write_file(path, &self.header(), &self.values)
    }

    pub fn read_archive(path: &Path) -> Result<Self> {
        let (h, values): (DemandHeader, Vec<f64>) = archive::read_file(path)?;
        Self::from_parts(h, values)
    }

    fn from_parts(h: DemandHeader, values: Vec<f64>) -> Result<Self> {
        if h.kind != KIND {
            return Err(Error::Archive(format!(
                "expected a {KIND} archive, found {:?}",
                h.kind
            )));
        }
        if h.shape[1] != h.region_ids.len() {
            return Err(Error::Archive("region id count disagrees with shape".into()));
        }
        Self::new(
            values,
            h.shape[0],
            h.region_ids,
            h.shape[2],
            h.start_epoch_secs,
            h.bin_width_secs,
            h.utc_offset_secs,
        )
    }

    /// Hex SHA-256 of the archive encoding: a content hash covering values,
    /// region ids and the time axis.
    pub fn fingerprint(&self) -> String {
        let bytes = self.to_bytes().expect("header always serialises");
        hex::encode(Sha256::digest(&bytes))
    }
}
