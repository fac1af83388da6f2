use crate::adapter::adapt;
use crate::dataio::{StaticGraph, WindowBatch};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor2, Var};

use super::cell::{mpgru_step, mpnn, Diffusion, GateParams, MpnnParams};
use super::params::{
    count_parameters, DirectionIds, Layout, ModelConfig, MpnnIds, ParamStore, ParameterCount,
};

/// Bound weights of one direction.
#[derive(Clone, Copy, Debug)]
pub struct DirectionParams {
    pub gates: GateParams,
    pub spatial: MpnnParams,
    pub first_weight: Var,
    pub first_bias: Var,
    pub second_weight: Var,
    pub second_bias: Var,
}

/// Per-step nodes of one direction, in processing order.
#[derive(Clone, Debug, Default)]
pub struct DirectionTrace {
    pub first_pred: Vec<Var>,
    pub first_filled: Vec<Var>,
    pub spatial: Vec<Var>,
    pub second_pred: Vec<Var>,
    pub second_filled: Vec<Var>,
    /// State entering each step (`H_{t-1}`).
    pub state_in: Vec<Var>,
    /// State leaving each step (`H_t`).
    pub state_out: Vec<Var>,
}

/// Runs the two-stage recurrent decoder over columns `xs`, `ms` from a zero state.
pub fn unidirectional_pass(
    tape: &mut Tape,
    xs: &[Var],
    ms: &[Var],
    diffusion: &Diffusion,
    p: &DirectionParams,
    d_state: usize,
) -> Result<DirectionTrace> {
    let n = xs
        .first()
        .map(|&x| tape.value(x).rows())
        .ok_or_else(|| Error::Contract("window has no steps".into()))?;
    let mut h = tape.constant(Tensor2::zeros(n, d_state));
    let mut tr = DirectionTrace::default();
    for (t, (&x, &m)) in xs.iter().zip(ms).enumerate() {
        let y1 = tape.matmul(h, p.first_weight)?;
        let y1 = tape.add_scalar(y1, p.first_bias)?;
        let x1 = tape.filter_merge(y1, x, m)?;
        let zs = tape.concat_cols(&[x1, m, h])?;
        let s = mpnn(tape, zs, diffusion, p.spatial)?;
        let sh = tape.concat_cols(&[s, h])?;
        let y2 = tape.matmul(sh, p.second_weight)?;
        let y2 = tape.add_scalar(y2, p.second_bias)?;
        let x2 = tape.filter_merge(y2, x, m)?;
        let next = mpgru_step(tape, x2, m, h, diffusion, &p.gates, t)?;
        tr.first_pred.push(y1);
        tr.first_filled.push(x1);
        tr.spatial.push(s);
        tr.second_pred.push(y2);
        tr.second_filled.push(x2);
        tr.state_in.push(h);
        tr.state_out.push(next);
        h = next;
    }
    Ok(tr)
}

/// All tape nodes of one bidirectional imputation.
#[derive(Clone, Debug)]
pub struct ForwardGraph {
    pub params: Vec<Var>,
    pub adjacency: Var,
    pub empty_rows: Vec<usize>,
    pub forward: DirectionTrace,
    /// Backward direction in its own processing order (time reversed).
    pub backward: DirectionTrace,
    pub fused_pred: Vec<Var>,
    pub fused: Vec<Var>,
}

/// Values of one bidirectional imputation, every `N x T` in window time order.
#[derive(Clone, Debug)]
pub struct ImputationOutput {
    /// Final output; observed positions equal the input.
    pub imputed: Tensor2,
    /// Fusion output before filtering.
    pub fused_pred: Tensor2,
    pub forward_first_pred: Tensor2,
    pub forward_second_pred: Tensor2,
    pub forward_first: Tensor2,
    pub forward_second: Tensor2,
    pub backward_first_pred: Tensor2,
    pub backward_second_pred: Tensor2,
    pub backward_first: Tensor2,
    pub backward_second: Tensor2,
    /// States after each forward step.
    pub forward_states: Vec<Tensor2>,
    /// States after each backward step, in backward processing order.
    pub backward_states: Vec<Tensor2>,
    pub adjacency: Tensor2,
    pub empty_rows: Vec<usize>,
}

/// Model configuration, parameter layout and values.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    layout: Layout,
    params: ParamStore,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let layout = Layout::new(&config)?;
        let params = ParamStore::init(&layout, seed);
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let layout = Layout::new(&config)?;
        let params = ParamStore::zeros(&layout);
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let layout = Layout::new(&config)?;
        params.validate(&layout)?;
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn count_parameters(&self) -> ParameterCount {
        count_parameters(&self.layout)
    }

    fn check_inputs(&self, window: &WindowBatch, graph: &StaticGraph) -> Result<()> {
        let n = self.config.nodes;
        if window.n_nodes() != n || graph.n() != n {
            return Err(Error::Contract(format!(
                "model expects {n} nodes, window has {} and graph has {}",
                window.n_nodes(),
                graph.n()
            )));
        }
        if window.is_empty() {
            return Err(Error::Contract("window has no steps".into()));
        }
        if self.config.heads > 0 && window.len() != self.config.window {
            return Err(Error::Contract(format!(
                "attention adapter was built for windows of {} steps, got {}",
                self.config.window,
                window.len()
            )));
        }
        Ok(())
    }

    /// Records a full bidirectional pass on `tape`. Parameters are registered
    /// as trainable leaves when `trainable` is set.
    pub fn record(
        &self,
        tape: &mut Tape,
        window: &WindowBatch,
        graph: &StaticGraph,
        trainable: bool,
    ) -> Result<ForwardGraph> {
        self.check_inputs(window, graph)?;
        let params: Vec<Var> = self
            .params
            .tensors()
            .iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        let v = |id: super::params::ParamId| params[id.index()];

        let (adjacency, empty_rows) = if self.layout.heads.is_empty() {
            (tape.constant(graph.weights().clone()), Vec::new())
        } else {
            let x = tape.constant(window.x.clone());
            let support = tape.constant(graph.support());
            let heads: Vec<(Var, Var)> = self.layout.heads.iter().map(|&(q, k)| (v(q), v(k))).collect();
            let g = adapt(tape, x, &heads, support, window.start)?;
            (g.a_star, g.empty_rows)
        };
        let diffusion = Diffusion::new(tape, adjacency, self.config.diffusion_order)?;

        let steps = window.len();
        let xs: Vec<Var> = (0..steps).map(|t| tape.constant(window.x.column(t))).collect();
        let ms: Vec<Var> = (0..steps).map(|t| tape.constant(window.mask.column(t))).collect();
        let rev = |v: &[Var]| v.iter().rev().copied().collect::<Vec<_>>();

        let bind = |ids: &DirectionIds| {
            let layer = |m: MpnnIds| MpnnParams {
                theta: v(m.theta),
                bias: v(m.bias),
            };
            DirectionParams {
                gates: GateParams {
                    reset: layer(ids.reset),
                    update: layer(ids.update),
                    candidate: layer(ids.candidate),
                },
                spatial: layer(ids.spatial),
                first_weight: v(ids.first_weight),
                first_bias: v(ids.first_bias),
                second_weight: v(ids.second_weight),
                second_bias: v(ids.second_bias),
            }
        };
        let d = self.config.d_state;
        let forward = unidirectional_pass(tape, &xs, &ms, &diffusion, &bind(&self.layout.forward), d)?;
        let backward =
            unidirectional_pass(tape, &rev(&xs), &rev(&ms), &diffusion, &bind(&self.layout.backward), d)?;

        let f = self.layout.fusion;
        let mut fused_pred = Vec::with_capacity(steps);
        let mut fused = Vec::with_capacity(steps);
        for t in 0..steps {
            let tau = steps - 1 - t;
            let z = tape.concat_cols(&[
                forward.spatial[t],
                forward.state_in[t],
                backward.spatial[tau],
                backward.state_in[tau],
            ])?;
            let hidden = tape.matmul(z, v(f.hidden_weight))?;
            let hidden = tape.add_bias(hidden, v(f.hidden_bias))?;
            let hidden = tape.tanh(hidden);
            let y = tape.matmul(hidden, v(f.out_weight))?;
            let y = tape.add_scalar(y, v(f.out_bias))?;
            fused.push(tape.filter_merge(y, xs[t], ms[t])?);
            fused_pred.push(y);
        }
        Ok(ForwardGraph {
            params,
            adjacency,
            empty_rows,
            forward,
            backward,
            fused_pred,
            fused,
        })
    }

    /// Imputes one window (standardized space).
    pub fn impute(&self, window: &WindowBatch, graph: &StaticGraph) -> Result<ImputationOutput> {
        let mut tape = Tape::new();
        let g = self.record(&mut tape, window, graph, false)?;
        Ok(extract(&tape, &g))
    }

    /// Training loss on `input` against `target` at `target_mask`, with one
    /// gradient tensor per parameter in layout order.
    pub fn loss_and_gradients(
        &self,
        input: &WindowBatch,
        target: &Tensor2,
        target_mask: &Tensor2,
        graph: &StaticGraph,
    ) -> Result<(f64, Vec<Tensor2>)> {
        let mut tape = Tape::new();
        let g = self.record(&mut tape, input, graph, true)?;
        let loss = training_loss(&mut tape, &g, target, target_mask)?;
        let value = tape.value(loss).get(0, 0);
        if !value.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        let mut grads = tape.backward(loss)?;
        Ok((value, g.params.iter().map(|&p| grads.take(p)).collect()))
    }

    /// Loss value only.
    pub fn loss(
        &self,
        input: &WindowBatch,
        target: &Tensor2,
        target_mask: &Tensor2,
        graph: &StaticGraph,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let g = self.record(&mut tape, input, graph, false)?;
        let loss = training_loss(&mut tape, &g, target, target_mask)?;
        Ok(tape.value(loss).get(0, 0))
    }
}

fn stack(tape: &Tape, cols: &[Var], reverse: bool) -> Tensor2 {
    let t = cols.len();
    let n = tape.value(cols[0]).rows();
    Tensor2::from_fn(n, t, |i, j| {
        let k = if reverse { t - 1 - j } else { j };
        tape.value(cols[k]).get(i, 0)
    })
}

fn extract(tape: &Tape, g: &ForwardGraph) -> ImputationOutput {
    let states = |v: &[Var]| v.iter().map(|&h| tape.value(h).clone()).collect();
    ImputationOutput {
        imputed: stack(tape, &g.fused, false),
        fused_pred: stack(tape, &g.fused_pred, false),
        forward_first_pred: stack(tape, &g.forward.first_pred, false),
        forward_second_pred: stack(tape, &g.forward.second_pred, false),
        forward_first: stack(tape, &g.forward.first_filled, false),
        forward_second: stack(tape, &g.forward.second_filled, false),
        backward_first_pred: stack(tape, &g.backward.first_pred, true),
        backward_second_pred: stack(tape, &g.backward.second_pred, true),
        backward_first: stack(tape, &g.backward.first_filled, true),
        backward_second: stack(tape, &g.backward.second_filled, true),
        forward_states: states(&g.forward.state_out),
        backward_states: states(&g.backward.state_out),
        adjacency: tape.value(g.adjacency).clone(),
        empty_rows: g.empty_rows.clone(),
    }
}

/// Sum of masked mean absolute errors of the given `N x T` stage predictions.
pub fn multi_stage_loss(
    tape: &mut Tape,
    stages: &[Var],
    target: &Tensor2,
    target_mask: &Tensor2,
) -> Result<Var> {
    let target = tape.constant(target.clone());
    let mask = tape.constant(target_mask.clone());
    let terms = stages
        .iter()
        .map(|&s| {
            let diff = tape.sub(s, target)?;
            let abs = tape.abs(diff);
            tape.masked_mean(abs, mask)
        })
        .collect::<Result<Vec<_>>>()?;
    tape.add_n(&terms)
}

/// Equal-weight MAE over the four directional stage predictions and the
/// pre-filter fused prediction.
pub fn training_loss(
    tape: &mut Tape,
    g: &ForwardGraph,
    target: &Tensor2,
    target_mask: &Tensor2,
) -> Result<Var> {
    let mut stages = Vec::with_capacity(5);
    for (cols, reverse) in [
        (&g.forward.first_pred, false),
        (&g.forward.second_pred, false),
        (&g.backward.first_pred, true),
        (&g.backward.second_pred, true),
        (&g.fused_pred, false),
    ] {
        let ordered: Vec<Var> = if reverse {
            cols.iter().rev().copied().collect()
        } else {
            cols.clone()
        };
        stages.push(tape.concat_cols(&ordered)?);
    }
    multi_stage_loss(tape, &stages, target, target_mask)
}
