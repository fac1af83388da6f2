use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimization settings. Model dimensions live in [`crate::imputer::ModelConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Windows whose gradients are averaged before each optimizer step.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Stride between training windows; 0 means the window size.
    pub train_stride: usize,
    /// Fraction of visible training entries additionally hidden from the input
    /// of each window; the loss is still scored on all visible entries.
    pub train_hide_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Write measured epoch durations into the training log.
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 4,
            max_epochs: 200,
            patience: 25,
            seed: 0,
            train_stride: 0,
            train_hide_rate: 0.25,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            log_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("train.learning_rate must be finite and nonnegative, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("train.batch_size, max_epochs and patience must be at least 1".into());
        }
        if self.patience > self.max_epochs {
            return bad(format!(
                "train.patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            ));
        }
        if !(0.0..1.0).contains(&self.train_hide_rate) {
            return bad(format!("train.train_hide_rate must be in [0, 1), got {}", self.train_hide_rate));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0) {
            return bad("Adam requires beta1, beta2 in [0, 1) and eps > 0".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_invalid_values() {
        let base = TrainConfig::default();
        for cfg in [
            TrainConfig { patience: 300, ..base.clone() },
            TrainConfig { batch_size: 0, ..base.clone() },
            TrainConfig { learning_rate: -1.0, ..base.clone() },
            TrainConfig { train_hide_rate: 1.0, ..base.clone() },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(TrainConfig { learning_rate: 0.0, ..base }.validate().is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<TrainConfig>("learning_rate = 0.01\nmomentum = 0.9").is_err());
        let c: TrainConfig = toml::from_str("seed = 7").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.learning_rate, 1e-3);
    }
}
