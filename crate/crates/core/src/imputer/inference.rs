use std::ops::Range;

use crate::dataio::{windows, Split, StaticGraph, TimeSeriesDataset};
use crate::error::Result;
use crate::exec::Execution;

use super::model::Model;

/// Model output over the windows of one split, destandardized.
#[derive(Clone, Debug)]
pub struct SplitImputation {
    /// Steps covered by full windows; a trailing partial window is not imputed.
    pub steps: Range<usize>,
    pub n_nodes: usize,
    /// Time-major values over `steps`: observed inputs copied, the rest imputed.
    pub values: Vec<f64>,
    /// True where the value was produced by the model.
    pub imputed: Vec<bool>,
}

impl SplitImputation {
    pub fn covers(&self, t: usize) -> bool {
        self.steps.contains(&t)
    }

    pub fn value(&self, t: usize, i: usize) -> f64 {
        self.values[(t - self.steps.start) * self.n_nodes + i]
    }

    pub fn is_imputed(&self, t: usize, i: usize) -> bool {
        self.imputed[(t - self.steps.start) * self.n_nodes + i]
    }
}

/// Imputes `split` with non-overlapping windows of the model's window size.
pub fn impute_split(
    model: &Model,
    ds: &TimeSeriesDataset,
    graph: &StaticGraph,
    split: Split,
    exec: Execution,
) -> Result<SplitImputation> {
    let t_win = model.config().window;
    let batches = windows(ds, t_win, t_win, split)?;
    let outputs = exec
        .map(&batches, |w| model.impute(w, graph))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let n = ds.n_nodes();
    let start = ds.splits().range(split).start;
    let covered = batches.len() * t_win;
    let mut values = vec![0.0; covered * n];
    let mut imputed = vec![false; covered * n];
    let scaler = ds.scaler();
    for (w, out) in batches.iter().zip(&outputs) {
        for j in 0..t_win {
            let t = w.start + j;
            for i in 0..n {
                let k = (t - start) * n + i;
                if w.mask.get(i, j) == 1.0 {
                    values[k] = ds.value(t, i);
                } else {
                    values[k] = scaler.inverse(i, out.imputed.get(i, j));
                    imputed[k] = true;
                }
            }
        }
    }
    Ok(SplitImputation {
        steps: start..start + covered,
        n_nodes: n,
        values,
        imputed,
    })
}
