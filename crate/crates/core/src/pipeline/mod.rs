//! From region-labelled trip records to normalised forecasting windows.

mod ingest;
mod normalize;
mod split;
mod tensor;
mod time;
mod window;

pub use ingest::{ingest_trips, parse_timestamp, parse_utc_offset, read_trips_csv, TripRecord};
pub use normalize::Normalizer;
pub use split::{chronological_split, Splits, DEFAULT_RATIOS};
pub use tensor::DemandTensor;
pub use time::{build_time_features, TimeFeatures, TIME_FEATURES};
pub use window::{make_windows, ForecastBatch};

pub const SECONDS_PER_DAY: i64 = 86_400;
