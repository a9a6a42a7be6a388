use std::collections::BTreeMap;
use std::io::Read;

use chrono::{DateTime, FixedOffset, NaiveDateTime, TimeZone};

use crate::pipeline::{DemandTensor, SECONDS_PER_DAY};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    /// Epoch seconds.
    pub timestamp: i64,
    pub region_id: String,
    pub count: f64,
}

/// Parses `+HH:MM`, `-HH:MM`, `Z` or `UTC`.
pub fn parse_utc_offset(s: &str) -> Result<FixedOffset> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("z") || s.eq_ignore_ascii_case("utc") {
        return Ok(FixedOffset::east_opt(0).unwrap());
    }
    let bad = || Error::Config(format!("unrecognised UTC offset {s:?}; expected e.g. +08:00"));
    let (sign, rest) = match s.as_bytes().first() {
        Some(b'+') => (1, &s[1..]),
        Some(b'-') => (-1, &s[1..]),
        _ => return Err(bad()),
    };
    let (h, m) = rest.split_once(':').ok_or_else(bad)?;
    let h: i32 = h.parse().map_err(|_| bad())?;
    let m: i32 = m.parse().map_err(|_| bad())?;
    if !(0..=23).contains(&h) || !(0..60).contains(&m) {
        return Err(bad());
    }
    FixedOffset::east_opt(sign * (h * 3600 + m * 60)).ok_or_else(bad)
}

/// RFC 3339, or `YYYY-MM-DD HH:MM:SS` read in the given local offset.
pub fn parse_timestamp(s: &str, local: &FixedOffset) -> Option<i64> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    let naive = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").ok()?;
    local
        .from_local_datetime(&naive)
        .single()
        .map(|t| t.timestamp())
}

/// Reads `timestamp,region_id[,count]` CSV. Row numbers in errors are file
/// line numbers (the header is line 1).
pub fn read_trips_csv<R: Read>(reader: R, local: &FixedOffset) -> Result<Vec<TripRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let ts_col = col("timestamp").ok_or_else(|| Error::Row {
        row: 1,
        message: "header must contain `timestamp`".into(),
    })?;
    let region_col = col("region_id").ok_or_else(|| Error::Row {
        row: 1,
        message: "header must contain `region_id`".into(),
    })?;
    let count_col = col("count");

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Row {
            row: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let row = rec.position().map_or(0, |p| p.line());
        let field = |i: usize, what: &str| {
            rec.get(i).ok_or_else(|| Error::Row {
                row,
                message: format!("missing {what}"),
            })
        };
        let ts_text = field(ts_col, "timestamp")?;
        let timestamp = parse_timestamp(ts_text, local).ok_or_else(|| Error::Row {
            row,
            message: format!("unparseable timestamp {ts_text:?}"),
        })?;
        let region_id = field(region_col, "region_id")?;
        if region_id.is_empty() {
            return Err(Error::Row {
                row,
                message: "empty region_id".into(),
            });
        }
        let count = match count_col.and_then(|c| rec.get(c)).filter(|s| !s.is_empty()) {
            None => 1.0,
            Some(text) => text
                .parse::<f64>()
                .ok()
                .filter(|c| c.is_finite() && *c >= 0.0)
                .ok_or_else(|| Error::Row {
                    row,
                    message: format!("count {text:?} is not a nonnegative number"),
                })?,
        };
        out.push(TripRecord {
            timestamp,
            region_id: region_id.to_string(),
            count,
        });
    }
    Ok(out)
}

/// Start of the bin containing `t`, with bins aligned to local midnight.
fn bin_floor(t: i64, bin_width: i64, offset: i64) -> i64 {
    (t + offset).div_euclid(bin_width) * bin_width - offset
}

/// Bins trip records into a single-feature demand tensor. Bins are half-open
/// `[start, start + bin_width)` and aligned to local midnight; regions are
/// ordered lexicographically by id; empty bins are zero.
pub fn ingest_trips<I>(records: I, bin_width: i64, local: FixedOffset) -> Result<DemandTensor>
where
    I: IntoIterator<Item = TripRecord>,
{
    if bin_width <= 0 || SECONDS_PER_DAY % bin_width != 0 {
        return Err(Error::Config(format!(
            "bin width {bin_width}s must divide one day evenly"
        )));
    }
    let offset = local.local_minus_utc() as i64;
    let records: Vec<TripRecord> = records.into_iter().collect();
    if records.is_empty() {
        return Err(Error::Ingest("no trip records".into()));
    }
    let regions: BTreeMap<&str, usize> = {
        let mut ids: Vec<&str> = records.iter().map(|r| r.region_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter().enumerate().map(|(i, id)| (id, i)).collect()
    };
    let first = records.iter().map(|r| r.timestamp).min().unwrap();
    let last = records.iter().map(|r| r.timestamp).max().unwrap();
    let start = bin_floor(first, bin_width, offset);
    let steps = ((bin_floor(last, bin_width, offset) - start) / bin_width + 1) as usize;
    let n = regions.len();
    let mut values = vec![0.0; steps * n];
    for r in &records {
        let t = ((r.timestamp - start).div_euclid(bin_width)) as usize;
        values[t * n + regions[r.region_id.as_str()]] += r.count;
    }
    let ids = regions.keys().map(|s| s.to_string()).collect();
    DemandTensor::new(values, steps, ids, 1, start, bin_width, offset as i32)
}
