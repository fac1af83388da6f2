use std::ops::Range;

use serde::Serialize;

use crate::dataio::{window_starts, Split, StaticGraph, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::imputer::{impute_split, Model};

/// Error metrics over the scored positions, in original units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub mae: f64,
    pub mse: f64,
    /// `100 * Σ|e| / Σ|truth|`.
    pub mre_pct: f64,
    pub n_scored: usize,
}

/// Scores `pred` against `truth` where `mask` is set.
pub fn score(truth: &[f64], pred: &[f64], mask: &[bool]) -> Result<MetricReport> {
    if truth.len() != pred.len() || truth.len() != mask.len() {
        return Err(Error::Contract(format!(
            "score inputs differ in length: {} truth, {} predictions, {} mask",
            truth.len(),
            pred.len(),
            mask.len()
        )));
    }
    let (mut abs, mut sq, mut tot, mut n) = (0.0, 0.0, 0.0, 0usize);
    for ((&y, &p), _) in truth.iter().zip(pred).zip(mask).filter(|(_, &m)| m) {
        let e = p - y;
        abs += e.abs();
        sq += e * e;
        tot += y.abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptySelection("no positions to score"));
    }
    if tot == 0.0 {
        return Err(Error::Data("relative error undefined: scored truth values are all zero".into()));
    }
    Ok(MetricReport {
        mae: abs / n as f64,
        mse: sq / n as f64,
        mre_pct: 100.0 * abs / tot,
        n_scored: n,
    })
}

/// Steps of `split` covered by non-overlapping windows of length `window`.
pub fn covered_steps(ds: &TimeSeriesDataset, split: Split, window: usize) -> Range<usize> {
    let range = ds.splits().range(split);
    let n = window_starts(range.len(), window, window).len();
    range.start..range.start + n * window
}

/// Scores a time-major prediction over held-out entries inside `steps`.
pub fn score_held_out(ds: &TimeSeriesDataset, steps: Range<usize>, pred: impl Fn(usize, usize) -> f64) -> Result<MetricReport> {
    let n = ds.n_nodes();
    let len = steps.len() * n;
    let mut truth = Vec::with_capacity(len);
    let mut p = Vec::with_capacity(len);
    let mut mask = Vec::with_capacity(len);
    for t in steps {
        for i in 0..n {
            truth.push(ds.value(t, i));
            p.push(pred(t, i));
            mask.push(ds.is_eval(t, i));
        }
    }
    score(&truth, &p, &mask)
}

/// Imputes `split` with `model` and scores it on the held-out entries.
pub fn evaluate_model(
    model: &Model,
    ds: &TimeSeriesDataset,
    graph: &StaticGraph,
    split: Split,
    exec: Execution,
) -> Result<MetricReport> {
    let imp = impute_split(model, ds, graph, split, exec)?;
    score_held_out(ds, imp.steps.clone(), |t, i| imp.value(t, i))
}
