//! `sdagrin` command-line driver.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sdagrin::dataio::{RegimeKind, Split};
use sdagrin::exec::Execution;

use config::RunConfig;
use failure::Failure;

const FORMATS: &str = "\
Data formats (UTF-8, comma separated, `.` decimals, LF line endings, `#` lines are comments):
  values     timestamp,<id1>,...,<idN>   one row per step; an empty cell is missing
  mask       same header and timestamps; cells 0 or 1 (1 = observed)
  coords     id,lat,lon                  one row per variable
  adjacency  node,<id1>,...,<idN>        one row per node, non-negative weights
  provenance same layout as mask; 1 marks a value produced by the model

Precedence: command-line flags, then the --config file, then built-in defaults.
Relative paths inside a config file are resolved against the file's directory.

Exit codes: 0 success, 1 usage or configuration error, 2 data or I/O error, 3 divergence.
Failures print a message and a final `error: kind=<kind> code=<code>` line on stderr.";

#[derive(Parser, Debug)]
#[command(name = "sdagrin", version, about = "Graph recurrent imputation with per-window attention-adapted adjacency")]
#[command(after_long_help = FORMATS)]
pub struct Cli {
    /// Run configuration (TOML with sections synth, data, model, train, eval, output).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Training seed; overrides `train.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run every data-parallel step on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a regime-switching synthetic dataset and its static graph.
    Synth(SynthArgs),
    /// Train a model; writes a checkpoint and the training log.
    Train(TrainArgs),
    /// Fill held-out and missing entries of one split; writes values and provenance.
    Impute(ImputeArgs),
    /// Score imputations on the held-out entries against the mean imputer.
    Evaluate(EvaluateArgs),
    /// Static-graph ablation or a sweep over window, missing rate or heads.
    Ablate(AblateArgs),
    /// Per-window pairwise relative MSE profile.
    Diagnose(DiagnoseArgs),
    /// Static adjacency and the adapted adjacency of each window.
    ExportGraphs(ExportArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum)]
    pub regimes: Option<RegimeArg>,
    #[arg(long)]
    pub switch_period: Option<usize>,
    #[arg(long)]
    pub noise_scale: Option<f64>,
    /// Generator seed; overrides `synth.seed`.
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
pub struct ModelFlags {
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub head_dim: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub missing_rate: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ImputeArgs {
    /// Defaults to `<output>/model.ckpt`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Defaults to `<output>/model.ckpt`; ignored with `--imputed`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Score a values CSV written by `impute` instead of running the model.
    #[arg(long)]
    pub imputed: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long, value_enum, default_value = "static")]
    pub axis: AxisArg,
    /// Comma-separated axis values; defaults to the axis' standard grid.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    /// Comma-separated seeds; overrides `eval.seeds`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub missing_rate: Option<f64>,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    /// Defaults to `model.window`.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// Comma-separated window indices within the split; all windows by default.
    #[arg(long, value_delimiter = ',')]
    pub windows: Vec<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RegimeArg {
    Matching,
    Block,
    Single,
}

impl From<RegimeArg> for RegimeKind {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Matching => RegimeKind::Matching,
            RegimeArg::Block => RegimeKind::Block,
            RegimeArg::Single => RegimeKind::Single,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
            SplitArg::All => Split::All,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    Static,
    Window,
    Missing,
    Heads,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.output {
        cfg.output.dir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
    }
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Synth(a) => commands::synth(cfg, a),
        Command::Train(a) => commands::train(cfg, a, exec),
        Command::Impute(a) => commands::impute(cfg, a, exec),
        Command::Evaluate(a) => commands::evaluate(cfg, a, exec),
        Command::Ablate(a) => commands::ablate(cfg, a, exec),
        Command::Diagnose(a) => commands::diagnose(cfg, a),
        Command::ExportGraphs(a) => commands::export_graphs(cfg, a, exec),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            if !usage {
                return ExitCode::SUCCESS;
            }
            eprintln!("error: kind=usage code=1");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sdagrin: {f}");
            eprintln!("error: kind={} code={}", f.kind(), f.code());
            ExitCode::from(f.code() as u8)
        }
    }
}
