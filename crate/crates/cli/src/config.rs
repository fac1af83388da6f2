//! Run configuration file.

use std::path::{Path, PathBuf};

use sdagrin::dataio::{Split, SynthConfig};
use sdagrin::imputer::ModelConfig;
use sdagrin::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub values: Option<PathBuf>,
    /// Observed mask; without it, empty cells are missing.
    pub mask: Option<PathBuf>,
    pub coords: Option<PathBuf>,
    /// `N x N` matrix CSV; takes precedence over `coords`.
    pub adjacency: Option<PathBuf>,
    /// Gaussian-kernel cut-off used with `coords`.
    pub threshold: f64,
    pub train_fraction: f64,
    pub val_fraction: f64,
    /// Share of observed entries held out for scoring.
    pub missing_rate: f64,
    /// Seed of the held-out mask; defaults to the training seed.
    pub missing_seed: Option<u64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            values: None,
            mask: None,
            coords: None,
            adjacency: None,
            threshold: 0.1,
            train_fraction: 0.7,
            val_fraction: 0.1,
            missing_rate: 0.25,
            missing_seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub seeds: Vec<u64>,
    pub split: Split,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            split: Split::Test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs/default"),
        }
    }
}

impl RunConfig {
    /// Parses a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut cfg.data.values, &mut cfg.data.mask, &mut cfg.data.coords, &mut cfg.data.adjacency]
            .into_iter()
            .flatten()
        {
            rebase(p);
        }
        rebase(&mut cfg.output.dir);
        Ok(cfg)
    }

    pub fn missing_seed(&self) -> u64 {
        self.data.missing_seed.unwrap_or(self.train.seed)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Flattened `section.key` pairs for CSV header comments.
    pub fn echo(&self) -> Vec<(String, String)> {
        let value = toml::Table::try_from(self).expect("run config serializes");
        let mut out = Vec::new();
        for (section, body) in value {
            if let toml::Value::Table(t) = body {
                for (k, v) in t {
                    out.push((format!("{section}.{k}"), v.to_string()));
                }
            }
        }
        out
    }
}
