//! Datasets, CSV formats, static adjacency, held-out masks, windows and synthetic data.

mod adjacency;
pub mod csvio;
mod dataset;
mod masking;
mod synth;
mod window;

pub use adjacency::{build_static_adjacency, StaticGraph};
pub use csvio::{load_csv, write_csv};
pub use dataset::{Split, Splits, Standardizer, TimeSeriesDataset};
pub use masking::inject_missing;
pub use synth::{block_regimes, matching_regimes, synth_regime_var, RegimeKind, SynthConfig, VAR_COEFFICIENT};
pub use window::{window_starts, windows, WindowBatch};
