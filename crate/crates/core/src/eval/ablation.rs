use std::path::Path;

use crate::dataio::{csvio::write_table_csv, StaticGraph, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::imputer::{count_parameters, Layout, ParameterCount};

use super::sweep::{run_cell, CellResult, CellSpec, Summary};

/// Paired runs of the attention-adapted model and the static-graph model.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationResult {
    pub dynamic: Vec<CellResult>,
    pub fixed: Vec<CellResult>,
    pub dynamic_params: ParameterCount,
    pub fixed_params: ParameterCount,
}

impl AblationResult {
    pub fn dynamic_mae(&self) -> Summary {
        Summary::of(&self.dynamic.iter().map(|c| c.model.mae).collect::<Vec<_>>())
    }

    pub fn fixed_mae(&self) -> Summary {
        Summary::of(&self.fixed.iter().map(|c| c.model.mae).collect::<Vec<_>>())
    }

    pub fn baseline_mae(&self) -> Summary {
        Summary::of(&self.dynamic.iter().map(|c| c.mean_baseline.mae).collect::<Vec<_>>())
    }

    pub fn write_csv(&self, path: &Path, comments: &[(String, String)]) -> Result<()> {
        let mut rows = Vec::new();
        for (variant, cells, params) in [
            ("dynamic", &self.dynamic, &self.dynamic_params),
            ("static", &self.fixed, &self.fixed_params),
        ] {
            for c in cells.iter() {
                rows.push(vec![
                    variant.to_string(),
                    c.seed.to_string(),
                    c.model.mae.to_string(),
                    c.model.mse.to_string(),
                    c.model.mre_pct.to_string(),
                    c.mean_baseline.mae.to_string(),
                    params.adapter.to_string(),
                    params.overhead_pct.to_string(),
                    c.best_epoch.to_string(),
                    u8::from(c.diverged.is_some()).to_string(),
                ]);
            }
        }
        let mut c = comments.to_vec();
        let (d, s, b) = (self.dynamic_mae(), self.fixed_mae(), self.baseline_mae());
        c.push(("dynamic_mae".into(), format!("{} +- {}", d.mean, d.std)));
        c.push(("static_mae".into(), format!("{} +- {}", s.mean, s.std)));
        c.push(("mean_baseline_mae".into(), format!("{} +- {}", b.mean, b.std)));
        write_table_csv(
            path,
            &c,
            &[
                "variant",
                "seed",
                "mae",
                "mse",
                "mre_pct",
                "mean_baseline_mae",
                "adapter_params",
                "overhead_pct",
                "best_epoch",
                "diverged",
            ],
            &rows,
        )
    }
}

/// Trains the configured model and a copy with the adapter removed (the static
/// row-normalized graph at every window), with the same seeds and budget.
pub fn static_ablation(
    ds_raw: &TimeSeriesDataset,
    graph: &StaticGraph,
    spec: &CellSpec,
    seeds: &[u64],
    exec: Execution,
) -> Result<AblationResult> {
    if seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    if spec.model.heads == 0 {
        return Err(Error::Config("the dynamic variant needs at least one attention head".into()));
    }
    let mut fixed_spec = spec.clone();
    fixed_spec.model.heads = 0;
    let jobs: Vec<(bool, u64)> = [true, false]
        .into_iter()
        .flat_map(|d| seeds.iter().map(move |&s| (d, s)))
        .collect();
    let results = exec.map(&jobs, |&(dynamic, seed)| {
        let s = if dynamic { spec } else { &fixed_spec };
        run_cell(ds_raw, graph, s, seed, Execution::Sequential)
    });
    let mut dynamic = Vec::new();
    let mut fixed = Vec::new();
    for (&(d, _), r) in jobs.iter().zip(results) {
        if d {
            dynamic.push(r?);
        } else {
            fixed.push(r?);
        }
    }
    Ok(AblationResult {
        dynamic,
        fixed,
        dynamic_params: count_parameters(&Layout::new(&spec.model)?),
        fixed_params: count_parameters(&Layout::new(&fixed_spec.model)?),
    })
}
