use chrono::{DateTime, Datelike, FixedOffset, Timelike};

/// Width of the per-step time vector: time of day plus a 7-way day-of-week
/// one-hot.
pub const TIME_FEATURES: usize = 8;

/// Time-of-day and day-of-week features. Stored once per step; the same
/// values apply to every region.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFeatures {
    n_regions: usize,
    time_of_day: Vec<f64>,
    day_of_week: Vec<usize>,
}

/// `time_of_day = seconds since local midnight / 86400`; day of week counts
/// from Monday = 0.
pub fn build_time_features(timestamps: &[i64], n_regions: usize, local: &FixedOffset) -> TimeFeatures {
    let mut time_of_day = Vec::with_capacity(timestamps.len());
    let mut day_of_week = Vec::with_capacity(timestamps.len());
    for &ts in timestamps {
        let t = DateTime::from_timestamp(ts, 0)
            .expect("timestamp within chrono range")
            .with_timezone(local);
        time_of_day.push(t.num_seconds_from_midnight() as f64 / 86_400.0);
        day_of_week.push(t.weekday().num_days_from_monday() as usize);
    }
    TimeFeatures {
        n_regions,
        time_of_day,
        day_of_week,
    }
}

impl TimeFeatures {
    pub fn steps(&self) -> usize {
        self.time_of_day.len()
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn time_of_day(&self, step: usize) -> f64 {
        self.time_of_day[step]
    }

    pub fn day_index(&self, step: usize) -> usize {
        self.day_of_week[step]
    }

    /// `[time_of_day, one_hot(day_of_week)]` for one step.
    pub fn step_vector(&self, step: usize) -> [f64; TIME_FEATURES] {
        let mut v = [0.0; TIME_FEATURES];
        v[0] = self.time_of_day[step];
        v[1 + self.day_of_week[step]] = 1.0;
        v
    }

    /// (T x N) time of day, replicated across regions.
    pub fn dense_time_of_day(&self) -> Vec<f64> {
        self.time_of_day
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, self.n_regions))
            .collect()
    }

    /// (T x N x 7) one-hot day of week, replicated across regions.
    pub fn dense_day_of_week(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.steps() * self.n_regions * 7);
        for &d in &self.day_of_week {
            for _ in 0..self.n_regions {
                let mut row = [0.0; 7];
                row[d] = 1.0;
                out.extend_from_slice(&row);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::parse_timestamp;

    #[test]
    fn calendar_examples() {
        let utc = FixedOffset::east_opt(0).unwrap();
        // 2024-01-01 was a Monday
        let ts: Vec<i64> = ["2024-01-01 00:00:00", "2024-01-01 12:00:00", "2024-01-07 18:00:00"]
            .iter()
            .map(|s| parse_timestamp(s, &utc).unwrap())
            .collect();
        let tf = build_time_features(&ts, 3, &utc);
        assert_eq!(tf.time_of_day(0), 0.0);
        assert_eq!(tf.day_index(0), 0);
        assert_eq!(tf.time_of_day(1), 0.5);
        assert_eq!(tf.time_of_day(2), 0.75);
        assert_eq!(tf.day_index(2), 6);
        assert_eq!(tf.step_vector(0), [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let dense = tf.dense_day_of_week();
        assert_eq!(dense.len(), 3 * 3 * 7);
        for row in dense.chunks(7) {
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
        assert_eq!(tf.dense_time_of_day()[3..6], [0.5, 0.5, 0.5]);
    }

    #[test]
    fn local_offset_shifts_the_calendar() {
        let plus8 = FixedOffset::east_opt(8 * 3600).unwrap();
        let utc = FixedOffset::east_opt(0).unwrap();
        let ts = parse_timestamp("2024-01-07 20:00:00", &utc).unwrap();
        let tf = build_time_features(&[ts], 1, &plus8);
        // 04:00 on Monday local time
        assert_eq!(tf.day_index(0), 0);
        assert!((tf.time_of_day(0) - 4.0 / 24.0).abs() < 1e-15);
    }
}
