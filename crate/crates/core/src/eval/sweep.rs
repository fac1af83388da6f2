use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::dataio::{csvio::write_table_csv, inject_missing, Split, StaticGraph, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::imputer::ModelConfig;
use crate::trainer::{fit, TrainConfig};

use super::baseline::MeanBaseline;
use super::metrics::{covered_steps, evaluate_model, MetricReport};

/// One experiment configuration; the seed is supplied per run.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSpec {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub missing_rate: f64,
}

/// Outcome of one (configuration, seed) run on the test split.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellResult {
    pub seed: u64,
    pub model: MetricReport,
    pub mean_baseline: MetricReport,
    pub best_epoch: usize,
    pub epochs: usize,
    pub diverged: Option<String>,
}

/// Holds out `missing_rate` of the data with `seed`, trains with `seed`, and
/// scores the best checkpoint and the mean imputer on the covered test steps.
pub fn run_cell(
    ds_raw: &TimeSeriesDataset,
    graph: &StaticGraph,
    spec: &CellSpec,
    seed: u64,
    exec: Execution,
) -> Result<CellResult> {
    let ds = inject_missing(ds_raw, spec.missing_rate, seed)?;
    let train = TrainConfig {
        seed,
        ..spec.train.clone()
    };
    let out = fit(&ds, graph, &spec.model, &train, exec)?;
    let model = evaluate_model(&out.model, &ds, graph, Split::Test, exec)?;
    let steps = covered_steps(&ds, Split::Test, spec.model.window);
    let mean_baseline = MeanBaseline::fit(&ds)?.evaluate(&ds, steps)?;
    Ok(CellResult {
        seed,
        model,
        mean_baseline,
        best_epoch: out.best_epoch,
        epochs: out.log.records.len(),
        diverged: out.diverged,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Window,
    Missing,
    Heads,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Window => "window",
            SweepAxis::Missing => "missing",
            SweepAxis::Heads => "heads",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::Window => vec![32.0, 64.0, 128.0, 256.0],
            SweepAxis::Missing => (1..10).map(|k| k as f64 / 10.0).collect(),
            SweepAxis::Heads => vec![1.0, 2.0, 3.0, 4.0],
        }
    }

    fn apply(self, base: &CellSpec, value: f64) -> Result<CellSpec> {
        let mut spec = base.clone();
        let as_count = |v: f64| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{} value must be a positive integer, got {v}", self.name())))
            }
        };
        match self {
            SweepAxis::Window => spec.model.window = as_count(value)?,
            SweepAxis::Missing => spec.missing_rate = value,
            SweepAxis::Heads => spec.model.heads = as_count(value)?,
        }
        Ok(spec)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "window" => Ok(SweepAxis::Window),
            "missing" => Ok(SweepAxis::Missing),
            "heads" => Ok(SweepAxis::Heads),
            other => Err(Error::Config(format!("unknown sweep axis `{other}` (window, missing, heads)"))),
        }
    }
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self { mean, std }
    }

    pub fn overlaps(&self, other: &Summary) -> bool {
        self.mean - self.std <= other.mean + other.std && other.mean - other.std <= self.mean + self.std
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    /// Why the configuration could not run, if it could not.
    pub infeasible: Option<String>,
    pub cells: Vec<CellResult>,
}

impl SweepRow {
    pub fn metric(&self, f: impl Fn(&MetricReport) -> f64) -> Option<Summary> {
        if self.cells.is_empty() {
            return None;
        }
        Some(Summary::of(&self.cells.iter().map(|c| f(&c.model)).collect::<Vec<_>>()))
    }

    pub fn baseline_mae(&self) -> Option<Summary> {
        if self.cells.is_empty() {
            return None;
        }
        Some(Summary::of(&self.cells.iter().map(|c| c.mean_baseline.mae).collect::<Vec<_>>()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub seeds: Vec<u64>,
    pub rows: Vec<SweepRow>,
}

fn infeasibility(ds: &TimeSeriesDataset, spec: &CellSpec) -> Option<String> {
    let t = spec.model.window;
    for split in [Split::Train, Split::Val, Split::Test] {
        let len = ds.splits().range(split).len();
        if t > len {
            return Some(format!("window {t} exceeds {} split length {len}", split.name()));
        }
    }
    if !(spec.missing_rate > 0.0 && spec.missing_rate < 1.0) {
        return Some(format!("missing rate {} outside (0, 1)", spec.missing_rate));
    }
    spec.model.validate().err().map(|e| e.to_string())
}

/// Runs every `(value, seed)` pair. Infeasible values yield a marked row and
/// the sweep continues; cells run through `exec` and are collected in order.
pub fn sweep(
    ds_raw: &TimeSeriesDataset,
    graph: &StaticGraph,
    base: &CellSpec,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
    exec: Execution,
) -> Result<SweepTable> {
    if seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let mut specs = Vec::with_capacity(values.len());
    for &v in values {
        let spec = axis.apply(base, v);
        let reason = match &spec {
            Ok(s) => infeasibility(ds_raw, s),
            Err(e) => Some(e.to_string()),
        };
        specs.push((v, spec.ok(), reason));
    }
    let jobs: Vec<(usize, u64)> = specs
        .iter()
        .enumerate()
        .filter(|(_, (_, _, reason))| reason.is_none())
        .flat_map(|(k, _)| seeds.iter().map(move |&s| (k, s)))
        .collect();
    let results = exec.map(&jobs, |&(k, seed)| {
        let spec = specs[k].1.as_ref().expect("feasible rows have a spec");
        run_cell(ds_raw, graph, spec, seed, Execution::Sequential)
    });
    let mut rows: Vec<SweepRow> = specs
        .iter()
        .map(|(v, _, reason)| SweepRow {
            value: *v,
            infeasible: reason.clone(),
            cells: Vec::new(),
        })
        .collect();
    for (&(k, _), r) in jobs.iter().zip(results) {
        rows[k].cells.push(r?);
    }
    Ok(SweepTable {
        axis,
        seeds: seeds.to_vec(),
        rows,
    })
}

fn fmt_opt(s: Option<Summary>) -> [String; 2] {
    match s {
        Some(s) => [s.mean.to_string(), s.std.to_string()],
        None => [String::new(), String::new()],
    }
}

impl SweepTable {
    pub const HEADER: [&'static str; 12] = [
        "axis", "value", "status", "runs", "mae_mean", "mae_std", "mse_mean", "mse_std", "mre_pct_mean",
        "mre_pct_std", "mean_baseline_mae", "diverged",
    ];

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let [mae, mae_sd] = fmt_opt(r.metric(|m| m.mae));
                let [mse, mse_sd] = fmt_opt(r.metric(|m| m.mse));
                let [mre, mre_sd] = fmt_opt(r.metric(|m| m.mre_pct));
                let [base, _] = fmt_opt(r.baseline_mae());
                let status = match &r.infeasible {
                    Some(reason) => format!("infeasible: {}", reason.replace(',', ";")),
                    None => "ok".into(),
                };
                let diverged = r.cells.iter().filter(|c| c.diverged.is_some()).count();
                vec![
                    self.axis.name().into(),
                    r.value.to_string(),
                    status,
                    r.cells.len().to_string(),
                    mae,
                    mae_sd,
                    mse,
                    mse_sd,
                    mre,
                    mre_sd,
                    base,
                    diverged.to_string(),
                ]
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path, comments: &[(String, String)]) -> Result<()> {
        let mut c = comments.to_vec();
        c.push(("seeds".into(), format!("{:?}", self.seeds)));
        c.push(("std".into(), "population standard deviation over seeds".into()));
        write_table_csv(path, &c, &Self::HEADER, &self.csv_rows())
    }
}
