//! Multivariate time-series imputation with a bidirectional message-passing
//! recurrent network whose graph is re-weighted per window by multi-head
//! attention over the variables.
//!
//! The crate is organized bottom-up:
//!
//! * [`numerics`]: tensors, reverse-mode differentiation, seeded RNG.
//! * [`dataio`]: datasets, CSV formats, static adjacency, masking, windows, synthetic data.
//! * [`adapter`]: attention-adapted adjacency per window.
//! * [`imputer`]: the recurrent imputation model, loss, parameters, checkpoints.
//! * [`trainer`]: Adam and the early-stopped training loop.
//! * [`eval`]: metrics, baselines, diagnostics, sweeps and ablations.

pub mod adapter;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod exec;
pub mod imputer;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};
