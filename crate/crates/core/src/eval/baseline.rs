use std::ops::Range;

use crate::dataio::{Split, TimeSeriesDataset};
use crate::error::{Error, Result};

use super::metrics::{score_held_out, MetricReport};

/// Per-variable mean of visible training entries, used for every hidden position.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanBaseline {
    pub means: Vec<f64>,
}

impl MeanBaseline {
    pub fn fit(ds: &TimeSeriesDataset) -> Result<Self> {
        let train = ds.splits().range(Split::Train);
        let means = (0..ds.n_nodes())
            .map(|i| {
                let (mut sum, mut n) = (0.0, 0usize);
                for t in train.clone() {
                    if ds.is_visible(t, i) {
                        sum += ds.value(t, i);
                        n += 1;
                    }
                }
                if n == 0 {
                    Err(Error::Data(format!(
                        "variable `{}` has no visible training entries",
                        ds.ids()[i]
                    )))
                } else {
                    Ok(sum / n as f64)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { means })
    }

    /// Visible entries are kept; everything else gets the variable mean.
    pub fn predict(&self, ds: &TimeSeriesDataset, t: usize, i: usize) -> f64 {
        if ds.is_visible(t, i) {
            ds.value(t, i)
        } else {
            self.means[i]
        }
    }

    pub fn evaluate(&self, ds: &TimeSeriesDataset, steps: Range<usize>) -> Result<MetricReport> {
        score_held_out(ds, steps, |t, i| self.predict(ds, t, i))
    }
}

/// Time-major predictions of the mean imputer over the whole dataset.
pub fn mean_baseline(ds: &TimeSeriesDataset) -> Result<Vec<f64>> {
    let b = MeanBaseline::fit(ds)?;
    let n = ds.n_nodes();
    Ok((0..ds.n_steps() * n).map(|k| b.predict(ds, k / n, k % n)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(values: Vec<f64>, observed: Vec<bool>) -> TimeSeriesDataset {
        let steps = values.len();
        TimeSeriesDataset::new(
            vec!["a".into()],
            (0..steps).map(|t| t.to_string()).collect(),
            values,
            observed,
            None,
        )
        .unwrap()
    }

    #[test]
    fn mean_of_observed_training_values() {
        let d = ds(
            vec![1.0, 0.0, 3.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0],
            vec![true, false, true, false, false, false, false, true, true, true],
        );
        let pred = mean_baseline(&d).unwrap();
        assert_eq!(pred[1], 2.0);
        assert_eq!(pred[5], 2.0);
        assert_eq!(pred[0], 1.0);
    }

    #[test]
    fn constant_series_scores_zero() {
        let d = ds(vec![4.0; 20], vec![true; 20]);
        let mut eval = vec![false; 20];
        eval[15] = true;
        eval[18] = true;
        let d = d.with_eval_mask(eval).unwrap();
        let r = MeanBaseline::fit(&d).unwrap().evaluate(&d, 0..20).unwrap();
        assert_eq!(r.mae, 0.0);
        assert_eq!(r.n_scored, 2);
    }
}
