//! Pairwise relative MSE between variables, per window.
//!
//! For window `w` and pair `(i, j)` the relative MSE is the mean over steps
//! where both are observed of `(x_i - x_j)^2`, divided by the variance of all
//! observed training values pooled across variables. The profile reports the
//! mean and population standard deviation of that quantity over all pairs.

use crate::dataio::{window_starts, Split, TimeSeriesDataset};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct WindowVolatility {
    pub window: usize,
    pub start: usize,
    pub mean: f64,
    pub std: f64,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VolatilityProfile {
    pub normalizer: f64,
    pub windows: Vec<WindowVolatility>,
    /// Window indices with no pair sharing an observed step.
    pub skipped: Vec<usize>,
}

impl VolatilityProfile {
    /// Standard deviation over windows of the per-window mean.
    pub fn temporal_std(&self) -> f64 {
        let n = self.windows.len() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let mu = self.windows.iter().map(|w| w.mean).sum::<f64>() / n;
        (self.windows.iter().map(|w| (w.mean - mu).powi(2)).sum::<f64>() / n).sqrt()
    }
}

fn train_variance(ds: &TimeSeriesDataset) -> Result<f64> {
    let vals: Vec<f64> = ds
        .splits()
        .range(Split::Train)
        .flat_map(|t| (0..ds.n_nodes()).map(move |i| (t, i)))
        .filter(|&(t, i)| ds.is_observed(t, i))
        .map(|(t, i)| ds.value(t, i))
        .collect();
    if vals.is_empty() {
        return Err(Error::EmptySelection("no observed training values"));
    }
    let mu = vals.iter().sum::<f64>() / vals.len() as f64;
    Ok(vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / vals.len() as f64)
}

pub fn volatility_profile(ds: &TimeSeriesDataset, window: usize, split: Split) -> Result<VolatilityProfile> {
    let n = ds.n_nodes();
    if n < 2 {
        return Err(Error::Data("volatility profile needs at least two variables".into()));
    }
    let range = ds.splits().range(split);
    let starts = window_starts(range.len(), window, window);
    if starts.is_empty() {
        return Err(Error::Config(format!(
            "window {window} does not fit in the {} split ({} steps)",
            split.name(),
            range.len()
        )));
    }
    let var = train_variance(ds)?;
    let normalizer = if var > 0.0 { var } else { 1.0 };
    let mut windows = Vec::new();
    let mut skipped = Vec::new();
    for (w, offset) in starts.into_iter().enumerate() {
        let start = range.start + offset;
        let mut rel = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let (mut sum, mut cnt) = (0.0, 0usize);
                for t in start..start + window {
                    if ds.is_observed(t, i) && ds.is_observed(t, j) {
                        sum += (ds.value(t, i) - ds.value(t, j)).powi(2);
                        cnt += 1;
                    }
                }
                if cnt > 0 {
                    rel.push(sum / cnt as f64 / normalizer);
                }
            }
        }
        if rel.is_empty() {
            skipped.push(w);
            continue;
        }
        let k = rel.len() as f64;
        let mean = rel.iter().sum::<f64>() / k;
        let std = (rel.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / k).sqrt();
        windows.push(WindowVolatility {
            window: w,
            start,
            mean,
            std,
            pairs: rel.len(),
        });
    }
    Ok(VolatilityProfile {
        normalizer,
        windows,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(n: usize, steps: usize, f: impl Fn(usize, usize) -> f64, observed: impl Fn(usize, usize) -> bool) -> TimeSeriesDataset {
        let mut values = Vec::new();
        let mut obs = Vec::new();
        for t in 0..steps {
            for i in 0..n {
                values.push(f(t, i));
                obs.push(observed(t, i));
            }
        }
        TimeSeriesDataset::new(
            (0..n).map(|i| format!("v{i}")).collect(),
            (0..steps).map(|t| t.to_string()).collect(),
            values,
            obs,
            None,
        )
        .unwrap()
    }

    #[test]
    fn identical_variables_give_zero() {
        let ds = dataset(3, 40, |t, _| (t as f64).sin(), |_, _| true);
        let p = volatility_profile(&ds, 8, Split::All).unwrap();
        assert_eq!(p.windows.len(), 5);
        assert!(p.windows.iter().all(|w| w.mean == 0.0 && w.std == 0.0));
    }

    #[test]
    fn constant_offset_closed_form() {
        let c = 3.0;
        let ds = dataset(2, 40, |_, i| i as f64 * c, |_, _| true);
        let p = volatility_profile(&ds, 10, Split::All).unwrap();
        // Pooled train values: half 0, half 3, so the variance is 2.25.
        let expect = c * c / 2.25;
        for w in &p.windows {
            assert!((w.mean - expect).abs() < 1e-12);
            assert_eq!(w.std, 0.0);
        }
    }

    #[test]
    fn shift_invariance() {
        let f = |t: usize, i: usize| ((t * (i + 1)) as f64 * 0.37).sin() * (i as f64 + 1.0);
        let a = volatility_profile(&dataset(4, 60, f, |_, _| true), 12, Split::All).unwrap();
        let b = volatility_profile(&dataset(4, 60, move |t, i| f(t, i) + 100.0, |_, _| true), 12, Split::All).unwrap();
        for (x, y) in a.windows.iter().zip(&b.windows) {
            assert!((x.mean - y.mean).abs() < 1e-9);
            assert!((x.std - y.std).abs() < 1e-9);
        }
    }

    #[test]
    fn windows_without_common_observations_are_skipped() {
        // Variables alternate: never observed at the same step inside 10..20.
        let ds = dataset(2, 40, |t, i| (t + i) as f64, |t, i| !(10..20).contains(&t) || (t + i) % 2 == 0);
        let p = volatility_profile(&ds, 10, Split::All).unwrap();
        assert_eq!(p.skipped, vec![1]);
        assert_eq!(p.windows.len(), 3);
    }
}
