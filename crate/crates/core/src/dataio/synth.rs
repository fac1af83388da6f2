//! Regime-switching graph VAR(1) generator.
//!
//! `x_t = 0.9 * Abar_{r(t)} x_{t-1} + noise_scale * eps_t` with `Abar` the
//! row-normalized regime adjacency, `r(t) = (t / switch_period) mod R`,
//! `eps_t ~ N(0, I)` and `x_0 ~ N(0, I)`. Draw order: `x_0` node by node, then
//! for each step the noise node by node.

use serde::{Deserialize, Serialize};

use super::adjacency::StaticGraph;
use super::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::numerics::{SeededRng, Tensor2};

pub const VAR_COEFFICIENT: f64 = 0.9;

pub fn synth_regime_var(
    n: usize,
    steps: usize,
    regimes: &[StaticGraph],
    switch_period: usize,
    noise_scale: f64,
    seed: u64,
) -> Result<TimeSeriesDataset> {
    if regimes.is_empty() {
        return Err(Error::Config("at least one regime graph is required".into()));
    }
    if switch_period < 2 {
        return Err(Error::Config(format!("switch period must be >= 2, got {switch_period}")));
    }
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(Error::Config(format!("noise scale must be >= 0, got {noise_scale}")));
    }
    let transitions: Vec<Tensor2> = regimes
        .iter()
        .enumerate()
        .map(|(r, g)| {
            if g.n() != n {
                return Err(Error::Config(format!("regime {r} has {} nodes, expected {n}", g.n())));
            }
            if let Some(i) = (0..n).find(|&i| g.weights().row(i).iter().sum::<f64>() <= 0.0) {
                return Err(Error::Data(format!("regime {r} row {i} is all zero")));
            }
            Ok(g.row_normalized())
        })
        .collect::<Result<_>>()?;

    let mut rng = SeededRng::new(seed);
    let mut values = Vec::with_capacity(n * steps);
    let mut prev: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    values.extend_from_slice(&prev);
    for t in 1..steps {
        let a = &transitions[(t / switch_period) % transitions.len()];
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let drift: f64 = a.row(i).iter().zip(&prev).map(|(w, x)| w * x).sum();
                VAR_COEFFICIENT * drift + noise_scale * rng.normal()
            })
            .collect();
        values.extend_from_slice(&next);
        prev = next;
    }
    values.truncate(n * steps);

    let ids = (0..n).map(|i| format!("v{i:02}")).collect();
    let timestamps = (0..steps).map(|t| t.to_string()).collect();
    TimeSeriesDataset::new(ids, timestamps, values, vec![true; n * steps], None)
}

/// Two regimes over `n` nodes: contiguous groups of `group` nodes, and nodes
/// grouped by `i mod (n / group)`. Off-diagonal supports are disjoint whenever
/// `group <= n / group`.
pub fn block_regimes(n: usize, group: usize) -> Result<Vec<StaticGraph>> {
    if group < 2 || !n.is_multiple_of(group) || group > n / group {
        return Err(Error::Config(format!(
            "group size {group} must be >= 2, divide {n}, and be at most {n}/{group}"
        )));
    }
    let classes = n / group;
    let contiguous = StaticGraph::from_pattern(n, |i, j| i / group == j / group)?;
    let strided = StaticGraph::from_pattern(n, |i, j| i % classes == j % classes)?;
    Ok(vec![contiguous, strided])
}

/// Two perfect matchings of a ring over an even `n >= 4`: pairs `(2k, 2k+1)`
/// and pairs `(2k+1, 2k+2 mod n)`. Every node has one partner per regime and
/// the union is the ring.
pub fn matching_regimes(n: usize) -> Result<Vec<StaticGraph>> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(Error::Config(format!("matching regimes need an even node count >= 4, got {n}")));
    }
    let even = StaticGraph::from_pattern(n, |i, j| i / 2 == j / 2)?;
    let odd = StaticGraph::from_pattern(n, |i, j| (i + n - 1) % n / 2 == (j + n - 1) % n / 2)?;
    Ok(vec![even, odd])
}

/// Regime family for [`SynthConfig`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    /// Alternating ring matchings ([`matching_regimes`]).
    Matching,
    /// Contiguous vs strided groups ([`block_regimes`]) with `group` nodes each.
    Block,
    /// Only the first matching, never switching.
    Single,
}

/// Parameters of a synthetic regime-switching dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub nodes: usize,
    pub steps: usize,
    pub regimes: RegimeKind,
    pub group: usize,
    pub switch_period: usize,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            nodes: 12,
            steps: 2560,
            regimes: RegimeKind::Matching,
            group: 3,
            switch_period: 64,
            noise_scale: 0.3,
            seed: 42,
        }
    }
}

impl SynthConfig {
    /// Regime graphs in cycling order.
    pub fn regime_graphs(&self) -> Result<Vec<StaticGraph>> {
        match self.regimes {
            RegimeKind::Matching => matching_regimes(self.nodes),
            RegimeKind::Block => block_regimes(self.nodes, self.group),
            RegimeKind::Single => Ok(matching_regimes(self.nodes)?[..1].to_vec()),
        }
    }

    /// The dataset and the static graph a model should be given: the union of
    /// all regime supports.
    pub fn generate(&self) -> Result<(TimeSeriesDataset, StaticGraph)> {
        let regimes = self.regime_graphs()?;
        let ds = synth_regime_var(self.nodes, self.steps, &regimes, self.switch_period, self.noise_scale, self.seed)?;
        Ok((ds, StaticGraph::union(&regimes)?))
    }
}
