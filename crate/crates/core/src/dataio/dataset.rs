use std::collections::HashSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    All,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::All => "all",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "all" => Ok(Split::All),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// Contiguous time ranges for training, validation and test, in that order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl Splits {
    /// Chronological split with the given train/val fractions; test takes the rest.
    pub fn by_fraction(len: usize, train: f64, val: f64) -> Result<Self> {
        if !(train > 0.0 && val >= 0.0 && train + val < 1.0) {
            return Err(Error::Config(format!(
                "split fractions train={train} val={val} must be positive and sum below 1"
            )));
        }
        // Small epsilon so 0.7 + 0.1 of 10 steps lands on 8, not 7.
        let a = (len as f64 * train + 1e-9).floor() as usize;
        let b = ((len as f64 * (train + val) + 1e-9).floor() as usize).min(len);
        Self::from_bounds(len, a, b)
    }

    pub fn from_bounds(len: usize, train_end: usize, val_end: usize) -> Result<Self> {
        if !(train_end <= val_end && val_end <= len) {
            return Err(Error::Config(format!(
                "split bounds {train_end}, {val_end} invalid for length {len}"
            )));
        }
        Ok(Self {
            train: 0..train_end,
            val: train_end..val_end,
            test: val_end..len,
        })
    }

    pub fn range(&self, split: Split) -> Range<usize> {
        match split {
            Split::Train => self.train.clone(),
            Split::Val => self.val.clone(),
            Split::Test => self.test.clone(),
            Split::All => 0..self.test.end,
        }
    }
}

/// Per-variable z-score statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    #[inline]
    pub fn forward(&self, node: usize, x: f64) -> f64 {
        (x - self.mean[node]) / self.std[node]
    }

    #[inline]
    pub fn inverse(&self, node: usize, z: f64) -> f64 {
        z * self.std[node] + self.mean[node]
    }
}

/// Multivariate series stored time-major (`steps x nodes`).
///
/// * `observed`: the entry exists in the raw data.
/// * `eval`: the entry is held out from model input and used for scoring; always a subset of `observed`.
///
/// Unobserved values are stored as `0.0` and never read.
#[derive(Clone, Debug)]
pub struct TimeSeriesDataset {
    ids: Vec<String>,
    timestamps: Vec<String>,
    values: Vec<f64>,
    observed: Vec<bool>,
    eval: Vec<bool>,
    coords: Option<Vec<[f64; 2]>>,
    splits: Splits,
    scaler: Standardizer,
}

impl TimeSeriesDataset {
    /// Builds a dataset with default 70/10/20 chronological splits and no held-out entries.
    pub fn new(
        ids: Vec<String>,
        timestamps: Vec<String>,
        values: Vec<f64>,
        observed: Vec<bool>,
        coords: Option<Vec<[f64; 2]>>,
    ) -> Result<Self> {
        let n = ids.len();
        let steps = timestamps.len();
        if n == 0 || steps == 0 {
            return Err(Error::Data("dataset needs at least one variable and one step".into()));
        }
        if values.len() != n * steps || observed.len() != n * steps {
            return Err(Error::Data(format!(
                "expected {} values for {steps} steps x {n} variables",
                n * steps
            )));
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Data(format!("duplicate variable id `{id}`")));
            }
        }
        let mut seen = HashSet::new();
        for ts in &timestamps {
            if !seen.insert(ts.as_str()) {
                return Err(Error::Data(format!("duplicate timestamp `{ts}`")));
            }
        }
        if let Some(c) = &coords {
            if c.len() != n {
                return Err(Error::Data(format!("{} coordinates for {n} variables", c.len())));
            }
        }
        let mut values = values;
        for (v, &o) in values.iter_mut().zip(&observed) {
            if !o {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::NonFinite("observed dataset value".into()));
            }
        }
        let splits = Splits::by_fraction(steps, 0.7, 0.1)?;
        let mut ds = Self {
            ids,
            timestamps,
            values,
            observed,
            eval: vec![false; n * steps],
            coords,
            splits,
            scaler: Standardizer {
                mean: vec![0.0; n],
                std: vec![1.0; n],
            },
        };
        ds.refit_scaler()?;
        Ok(ds)
    }

    pub fn with_splits(mut self, splits: Splits) -> Result<Self> {
        if splits.test.end != self.n_steps() {
            return Err(Error::Config(format!(
                "splits cover {} steps, dataset has {}",
                splits.test.end,
                self.n_steps()
            )));
        }
        self.splits = splits;
        self.refit_scaler()?;
        Ok(self)
    }

    /// Replaces the held-out mask. It must be a subset of the observed mask.
    pub fn with_eval_mask(mut self, eval: Vec<bool>) -> Result<Self> {
        if eval.len() != self.observed.len() {
            return Err(Error::Data("eval mask shape does not match dataset".into()));
        }
        if let Some(k) = eval.iter().zip(&self.observed).position(|(&e, &o)| e && !o) {
            let (t, i) = (k / self.n_nodes(), k % self.n_nodes());
            return Err(Error::Data(format!(
                "eval mask marks unobserved entry (step {t}, variable `{}`)",
                self.ids[i]
            )));
        }
        self.eval = eval;
        self.refit_scaler()?;
        Ok(self)
    }

    /// Recomputes standardization from train-split entries visible to the model.
    fn refit_scaler(&mut self) -> Result<()> {
        let n = self.n_nodes();
        let mut mean = vec![0.0; n];
        let mut std = vec![1.0; n];
        for (i, (m, s)) in mean.iter_mut().zip(std.iter_mut()).enumerate() {
            let vals: Vec<f64> = self
                .splits
                .train
                .clone()
                .filter(|&t| self.is_visible(t, i))
                .map(|t| self.value(t, i))
                .collect();
            if vals.is_empty() {
                return Err(Error::Data(format!(
                    "variable `{}` has no visible training entries",
                    self.ids[i]
                )));
            }
            let mu = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / vals.len() as f64;
            *m = mu;
            *s = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        self.scaler = Standardizer { mean, std };
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.ids.len()
    }

    pub fn n_steps(&self) -> usize {
        self.timestamps.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn timestamps(&self) -> &[String] {
        &self.timestamps
    }

    pub fn coords(&self) -> Option<&[[f64; 2]]> {
        self.coords.as_deref()
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn scaler(&self) -> &Standardizer {
        &self.scaler
    }

    #[inline]
    fn idx(&self, t: usize, i: usize) -> usize {
        t * self.ids.len() + i
    }

    /// Raw value; `0.0` where unobserved.
    #[inline]
    pub fn value(&self, t: usize, i: usize) -> f64 {
        self.values[self.idx(t, i)]
    }

    #[inline]
    pub fn is_observed(&self, t: usize, i: usize) -> bool {
        self.observed[self.idx(t, i)]
    }

    #[inline]
    pub fn is_eval(&self, t: usize, i: usize) -> bool {
        self.eval[self.idx(t, i)]
    }

    /// Observed and not held out: what the model is allowed to see.
    #[inline]
    pub fn is_visible(&self, t: usize, i: usize) -> bool {
        let k = self.idx(t, i);
        self.observed[k] && !self.eval[k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observed_mask(&self) -> &[bool] {
        &self.observed
    }

    pub fn eval_mask(&self) -> &[bool] {
        &self.eval
    }

    pub fn eval_count(&self) -> usize {
        self.eval.iter().filter(|&&e| e).count()
    }

    pub fn standardized(&self, t: usize, i: usize) -> f64 {
        self.scaler.forward(i, self.value(t, i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small() -> TimeSeriesDataset {
        let ids = vec!["a".to_string(), "b".to_string()];
        let ts = (0..10).map(|t| t.to_string()).collect();
        let values = (0..20).map(|k| k as f64).collect();
        TimeSeriesDataset::new(ids, ts, values, vec![true; 20], None).unwrap()
    }

    #[test]
    fn default_splits_cover_range() {
        let ds = small();
        let s = ds.splits();
        assert_eq!(s.train, 0..7);
        assert_eq!(s.val, 7..8);
        assert_eq!(s.test, 8..10);
    }

    #[test]
    fn scaler_uses_train_split_only() {
        let ds = small();
        // variable a: values 0,2,..,12 over train steps 0..7
        assert!((ds.scaler().mean[0] - 6.0).abs() < 1e-12);
        assert!((ds.scaler().std[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn standardize_round_trip() {
        let ds = small();
        for t in 0..ds.n_steps() {
            for i in 0..ds.n_nodes() {
                let z = ds.standardized(t, i);
                assert!((ds.scaler().inverse(i, z) - ds.value(t, i)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn eval_mask_must_be_subset_of_observed() {
        let ids = vec!["a".to_string()];
        let ts = (0..4).map(|t| t.to_string()).collect();
        let ds = TimeSeriesDataset::new(ids, ts, vec![1.0; 4], vec![true, false, true, true], None)
            .unwrap();
        assert!(ds.clone().with_eval_mask(vec![false, true, false, false]).is_err());
        assert!(ds.with_eval_mask(vec![false, false, true, false]).is_ok());
    }

    #[test]
    fn rejects_duplicate_ids() {
        let ids = vec!["a".to_string(), "a".to_string()];
        let ts = vec!["0".to_string()];
        assert!(TimeSeriesDataset::new(ids, ts, vec![1.0, 2.0], vec![true; 2], None).is_err());
    }

    #[test]
    fn rejects_variable_without_training_data() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let ts = (0..10).map(|t| t.to_string()).collect();
        let mut observed = vec![true; 20];
        for t in 0..7 {
            observed[t * 2 + 1] = false;
        }
        assert!(TimeSeriesDataset::new(ids, ts, vec![1.0; 20], observed, None).is_err());
    }
}
