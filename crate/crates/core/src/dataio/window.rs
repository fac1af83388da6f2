use super::dataset::{Split, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::numerics::Tensor2;

/// A `T`-step slice in model layout (`N x T`, one column per step).
///
/// `x` holds standardized values with every invisible entry set to 0, and
/// `mask` is 1 exactly where the model may read `x`. `truth` and `eval_mask`
/// carry the standardized ground truth and held-out positions for scoring;
/// they are never fed to the model.
#[derive(Clone, Debug)]
pub struct WindowBatch {
    pub start: usize,
    pub x: Tensor2,
    pub mask: Tensor2,
    pub truth: Tensor2,
    pub eval_mask: Tensor2,
}

impl WindowBatch {
    /// Model input with no scoring information attached.
    pub fn from_input(start: usize, x: Tensor2, mask: Tensor2) -> Result<Self> {
        if x.shape() != mask.shape() {
            return Err(Error::Shape {
                op: "window",
                left: x.shape(),
                right: mask.shape(),
            });
        }
        for (&v, &m) in x.data().iter().zip(mask.data()) {
            if m != 0.0 && m != 1.0 {
                return Err(Error::Contract("window mask must be binary".into()));
            }
            if m == 0.0 && v != 0.0 {
                return Err(Error::Contract("window input must be zero where the mask is zero".into()));
            }
        }
        let (n, t) = x.shape();
        Ok(Self {
            start,
            truth: x.clone(),
            x,
            mask,
            eval_mask: Tensor2::zeros(n, t),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.x.rows()
    }

    pub fn len(&self) -> usize {
        self.x.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.cols() == 0
    }

    /// Copy with time reversed (column `t` becomes column `T - 1 - t`).
    pub fn reversed(&self) -> Self {
        let rev = |m: &Tensor2| {
            let t = m.cols();
            Tensor2::from_fn(m.rows(), t, |i, j| m.get(i, t - 1 - j))
        };
        Self {
            start: self.start,
            x: rev(&self.x),
            mask: rev(&self.mask),
            truth: rev(&self.truth),
            eval_mask: rev(&self.eval_mask),
        }
    }

    /// Copy with nodes relabelled: new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            start: self.start,
            x: self.x.permute_rows(perm),
            mask: self.mask.permute_rows(perm),
            truth: self.truth.permute_rows(perm),
            eval_mask: self.eval_mask.permute_rows(perm),
        }
    }
}

/// Start offsets of the windows `windows` would emit over `len` steps.
pub fn window_starts(len: usize, window: usize, stride: usize) -> Vec<usize> {
    if window == 0 || stride == 0 || window > len {
        return Vec::new();
    }
    (0..=len - window).step_by(stride).collect()
}

/// Slices `split` into windows of `window` steps every `stride` steps.
///
/// A trailing partial window is dropped. Held-out entries appear with `M = 0`, `X = 0`.
pub fn windows(
    ds: &TimeSeriesDataset,
    window: usize,
    stride: usize,
    split: Split,
) -> Result<Vec<WindowBatch>> {
    if stride == 0 || window == 0 {
        return Err(Error::Config("window and stride must be at least 1".into()));
    }
    let range = ds.splits().range(split);
    if window > range.len() {
        return Err(Error::Config(format!(
            "window {window} exceeds {} split length {}",
            split.name(),
            range.len()
        )));
    }
    let n = ds.n_nodes();
    let out = window_starts(range.len(), window, stride)
        .into_iter()
        .map(|offset| {
            let start = range.start + offset;
            let mut x = Vec::with_capacity(n * window);
            let mut mask = Vec::with_capacity(n * window);
            let mut truth = Vec::with_capacity(n * window);
            let mut eval = Vec::with_capacity(n * window);
            for i in 0..n {
                for t in start..start + window {
                    let visible = ds.is_visible(t, i);
                    let z = if ds.is_observed(t, i) { ds.standardized(t, i) } else { 0.0 };
                    x.push(if visible { z } else { 0.0 });
                    mask.push(if visible { 1.0 } else { 0.0 });
                    truth.push(z);
                    eval.push(if ds.is_eval(t, i) { 1.0 } else { 0.0 });
                }
            }
            WindowBatch {
                start,
                x: Tensor2::from_vec_unchecked(n, window, x),
                mask: Tensor2::from_vec_unchecked(n, window, mask),
                truth: Tensor2::from_vec_unchecked(n, window, truth),
                eval_mask: Tensor2::from_vec_unchecked(n, window, eval),
            }
        })
        .collect();
    Ok(out)
}
