use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::dataio::{windows, Split, StaticGraph, TimeSeriesDataset, WindowBatch};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::imputer::{impute_split, Model, ModelConfig};
use crate::numerics::{derive_seed, SeededRng, Tensor2};

use super::adam::{adam_step, AdamState};
use super::config::TrainConfig;

pub const LOG_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
    pub seconds: f64,
}

/// Per-epoch training history.
#[derive(Clone, Debug)]
pub struct TrainingLog {
    pub header: Vec<(String, String)>,
    pub records: Vec<EpochRecord>,
    pub log_wall_time: bool,
}

impl TrainingLog {
    /// `epoch,train_loss,val_mae,seconds` with `# key=value` header lines. The
    /// seconds column is left empty unless wall time logging is enabled, so the
    /// file is reproducible byte for byte.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.header {
            let _ = writeln!(s, "# {k}={v}");
        }
        s.push_str("epoch,train_loss,val_mae,seconds\n");
        for r in &self.records {
            let secs = if self.log_wall_time {
                format!("{:.3}", r.seconds)
            } else {
                String::new()
            };
            let _ = writeln!(s, "{},{},{},{}", r.epoch, r.train_loss, r.val_mae, secs);
        }
        s
    }

    /// Measured epoch durations, kept apart from the reproducible log.
    pub fn timing_csv(&self) -> String {
        let mut s = String::from("epoch,seconds\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{:.3}", r.epoch, r.seconds);
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct FitOutcome {
    /// Best-validation parameters (the initial ones if no epoch completed).
    pub model: Model,
    pub log: TrainingLog,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    /// Set when training stopped on a non-finite state, loss or gradient.
    pub diverged: Option<String>,
}

/// Hides a further `rate` of the visible entries of `w`, keeping truth untouched.
fn whiten(w: &WindowBatch, rate: f64, rng: &mut SeededRng) -> WindowBatch {
    let mut out = w.clone();
    if rate > 0.0 {
        let (x, m) = (out.x.data_mut(), out.mask.data_mut());
        for k in 0..m.len() {
            if m[k] == 1.0 && rng.bernoulli(rate) {
                m[k] = 0.0;
                x[k] = 0.0;
            }
        }
    }
    out
}

/// Mean absolute error on held-out validation positions, in original units.
pub fn validation_mae(model: &Model, ds: &TimeSeriesDataset, graph: &StaticGraph, exec: Execution) -> Result<f64> {
    let imp = impute_split(model, ds, graph, Split::Val, exec)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in imp.steps.clone() {
        for i in 0..ds.n_nodes() {
            if ds.is_eval(t, i) {
                sum += (imp.value(t, i) - ds.value(t, i)).abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptySelection("validation split has no held-out entries"));
    }
    Ok(sum / count as f64)
}

/// Trains a freshly initialized model.
pub fn fit(
    ds: &TimeSeriesDataset,
    graph: &StaticGraph,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    exec: Execution,
) -> Result<FitOutcome> {
    let model = Model::new(model_cfg.clone(), derive_seed(cfg.seed, 0))?;
    fit_from(model, ds, graph, cfg, exec)
}

/// Trains `model` with Adam and early stopping on validation MAE.
pub fn fit_from(
    model: Model,
    ds: &TimeSeriesDataset,
    graph: &StaticGraph,
    cfg: &TrainConfig,
    exec: Execution,
) -> Result<FitOutcome> {
    cfg.validate()?;
    let t_win = model.config().window;
    if model.config().nodes != ds.n_nodes() {
        return Err(Error::Config(format!(
            "model has {} nodes, dataset has {}",
            model.config().nodes,
            ds.n_nodes()
        )));
    }
    let stride = if cfg.train_stride == 0 { t_win } else { cfg.train_stride };
    let train = windows(ds, t_win, stride, Split::Train)?;
    windows(ds, t_win, t_win, Split::Val)?;

    let header = vec![
        ("format_version".to_string(), LOG_FORMAT_VERSION.to_string()),
        ("seed".into(), cfg.seed.to_string()),
        ("learning_rate".into(), cfg.learning_rate.to_string()),
        ("beta1".into(), cfg.beta1.to_string()),
        ("beta2".into(), cfg.beta2.to_string()),
        ("eps".into(), cfg.eps.to_string()),
        ("batch_size".into(), cfg.batch_size.to_string()),
        ("train_windows".into(), train.len().to_string()),
    ];
    let mut log = TrainingLog {
        header,
        records: Vec::new(),
        log_wall_time: cfg.log_wall_time,
    };

    let mut current = model;
    let mut best = current.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut wait = 0;
    let mut adam = AdamState::new(current.params(), cfg.beta1, cfg.beta2, cfg.eps);
    let mut diverged = None;

    for epoch in 1..=cfg.max_epochs {
        let clock = Instant::now();
        let mut order: Vec<usize> = (0..train.len()).collect();
        SeededRng::derived(cfg.seed, epoch as u64).shuffle(&mut order);
        let hide_seed = derive_seed(cfg.seed, (1 << 32) + epoch as u64);

        let epoch_result: Result<f64> = (|| {
            let mut loss_sum = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let model = &current;
                let results = exec.map(chunk, |&k| {
                    let w = &train[k];
                    let mut rng = SeededRng::derived(hide_seed, k as u64);
                    let input = whiten(w, cfg.train_hide_rate, &mut rng);
                    model.loss_and_gradients(&input, &w.x, &w.mask, graph)
                });
                let mut total: Option<Vec<Tensor2>> = None;
                for r in results {
                    let (loss, grads) = r?;
                    loss_sum += loss;
                    match total.as_mut() {
                        None => total = Some(grads),
                        Some(acc) => {
                            for (a, g) in acc.iter_mut().zip(&grads) {
                                for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                                    *x += y;
                                }
                            }
                        }
                    }
                }
                let mut grads = total.expect("chunks are nonempty");
                let scale = 1.0 / chunk.len() as f64;
                for g in &mut grads {
                    g.data_mut().iter_mut().for_each(|v| *v *= scale);
                }
                adam_step(current.params_mut(), &grads, &mut adam, cfg.learning_rate)?;
            }
            Ok(loss_sum / train.len() as f64)
        })();

        let outcome = epoch_result.and_then(|train_loss| {
            let val = validation_mae(&current, ds, graph, exec)?;
            if !val.is_finite() {
                return Err(Error::NonFinite("validation MAE".into()));
            }
            Ok((train_loss, val))
        });
        let (train_loss, val) = match outcome {
            Ok(v) => v,
            Err(e) if e.is_divergence() => {
                diverged = Some(format!("epoch {epoch}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        log.records.push(EpochRecord {
            epoch,
            train_loss,
            val_mae: val,
            seconds: clock.elapsed().as_secs_f64(),
        });
        if val < best_val {
            best_val = val;
            best_epoch = epoch;
            best = current.clone();
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                break;
            }
        }
    }

    Ok(FitOutcome {
        model: best,
        log,
        best_epoch,
        best_val_mae: best_val,
        diverged,
    })
}
