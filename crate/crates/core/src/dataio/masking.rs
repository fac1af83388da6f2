use super::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Holds out each observed entry independently with probability `rate`.
///
/// Entries are visited time-major (step, then variable) and one uniform draw is
/// consumed per observed entry, so the result depends only on `(observed mask, rate, seed)`.
/// Any previous held-out mask is replaced.
pub fn inject_missing(ds: &TimeSeriesDataset, rate: f64, seed: u64) -> Result<TimeSeriesDataset> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::Config(format!("missing rate must be in (0, 1), got {rate}")));
    }
    let mut rng = SeededRng::new(seed);
    let eval: Vec<bool> = ds
        .observed_mask()
        .iter()
        .map(|&o| o && rng.bernoulli(rate))
        .collect();
    if !eval.iter().any(|&e| e) {
        return Err(Error::Data(format!(
            "missing rate {rate} held out no entries; nothing to score"
        )));
    }
    ds.clone().with_eval_mask(eval)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(steps: usize, n: usize) -> TimeSeriesDataset {
        let ids = (0..n).map(|i| format!("v{i}")).collect();
        let ts = (0..steps).map(|t| t.to_string()).collect();
        let values = (0..steps * n).map(|k| (k % 13) as f64).collect();
        TimeSeriesDataset::new(ids, ts, values, vec![true; steps * n], None).unwrap()
    }

    #[test]
    fn hidden_count_within_binomial_bound() {
        let ds = dataset(1000, 10);
        let out = inject_missing(&ds, 0.25, 3).unwrap();
        let hidden = out.eval_count();
        // mean 2500, sd ~43.3: +-4 sd
        assert!((2300..=2700).contains(&hidden), "{hidden}");
    }

    #[test]
    fn deterministic_under_seed() {
        let ds = dataset(200, 4);
        let a = inject_missing(&ds, 0.3, 9).unwrap();
        let b = inject_missing(&ds, 0.3, 9).unwrap();
        assert_eq!(a.eval_mask(), b.eval_mask());
        let c = inject_missing(&ds, 0.3, 10).unwrap();
        assert_ne!(a.eval_mask(), c.eval_mask());
    }

    #[test]
    fn tiny_rate_with_empty_result_rejected() {
        let ds = dataset(5, 2);
        assert!(inject_missing(&ds, 1e-12, 1).is_err());
        assert!(inject_missing(&ds, 0.0, 1).is_err());
        assert!(inject_missing(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn eval_is_subset_of_observed() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let ts = (0..50).map(|t| t.to_string()).collect();
        let observed: Vec<bool> = (0..100).map(|k| k % 3 != 0).collect();
        let ds = TimeSeriesDataset::new(ids, ts, vec![1.0; 100], observed, None).unwrap();
        let out = inject_missing(&ds, 0.5, 1).unwrap();
        for (e, o) in out.eval_mask().iter().zip(out.observed_mask()) {
            assert!(!e || *o);
        }
    }

    #[test]
    fn rate_that_empties_training_data_rejected() {
        let ds = dataset(3, 1);
        // 2 training steps; some seed at a high rate will hide both.
        let failed = (0..200).any(|s| inject_missing(&ds, 0.95, s).is_err());
        assert!(failed);
    }
}
