//! Adam optimization with validation-based early stopping.
//!
//! Each epoch visits the training windows in a seeded shuffled order. Window
//! gradients inside a batch may be computed in parallel; they are summed in
//! batch order, so results do not depend on the execution policy.

mod adam;
mod config;
mod fit;

pub use adam::{adam_step, AdamState};
pub use config::TrainConfig;
pub use fit::{fit, fit_from, validation_mae, EpochRecord, FitOutcome, TrainingLog, LOG_FORMAT_VERSION};
