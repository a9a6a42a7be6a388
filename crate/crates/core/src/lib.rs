//! Passenger-demand forecasting with an aggregation differential transformer.
//!
//! The crate is organised bottom-up:
//!
//! * [`diffcore`]: dense arrays and a tape-based reverse-mode autodiff engine.
//! * [`pipeline`]: trip ingestion, demand tensors, time features, splits and windows.
//! * [`clustering`]: DTW similarity, average-linkage agglomeration, balancing and
//!   the multi-level cluster hierarchy.
//! * [`model`]: embeddings, the four attention branches, encoder layers and the
//!   regression head.
//! * [`training`]: masked loss, AdamW, the learning-rate schedule, the training
//!   loop and checkpoints.
//! * [`evaluation`]: thresholded metrics and naive baselines.
//!
//! [`archive`] holds the `ADF1` binary container shared by demand tensors and
//! checkpoints; [`synthetic`] generates planted-group demand fixtures.

pub mod archive;
pub mod clustering;
pub mod diffcore;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod pipeline;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
