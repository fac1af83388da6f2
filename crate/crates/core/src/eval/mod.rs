//! Metrics, the mean imputer, the pairwise volatility diagnostic, sweeps and
//! the static-graph ablation.

mod ablation;
mod baseline;
mod metrics;
mod sweep;
mod volatility;

pub use ablation::{static_ablation, AblationResult};
pub use baseline::{mean_baseline, MeanBaseline};
pub use metrics::{covered_steps, evaluate_model, score, score_held_out, MetricReport};
pub use sweep::{run_cell, sweep, CellResult, CellSpec, Summary, SweepAxis, SweepRow, SweepTable};
pub use volatility::{volatility_profile, VolatilityProfile, WindowVolatility};

/// Output format version written into every CSV header.
pub const OUTPUT_FORMAT_VERSION: u32 = 1;
