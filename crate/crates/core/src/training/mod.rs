//! Loss, optimiser, learning-rate schedule, the training loop and
//! checkpoints.

mod checkpoint;
mod config;
mod loss;
mod optimizer;
mod trainer;

pub use checkpoint::Checkpoint;
pub use config::{lr_schedule, Precision, TrainConfig};
pub use loss::{denormalize_var, masked_mae_loss};
pub use optimizer::{clip_global_norm, global_norm, AdamW};
pub use trainer::{
    evaluate_windows, predict_windows, train, EpochRecord, Silent, TrainObserver, TrainOutcome,
    TrainingData,
};
