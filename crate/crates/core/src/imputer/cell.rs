//! Message passing and the recurrent cell.

use crate::error::{Error, Result};
use crate::numerics::{Tape, Var};

/// Diffusion operators for one window: `Ã = row_normalize(A*)` and `Ãᵀ`.
#[derive(Clone, Copy, Debug)]
pub struct Diffusion {
    pub forward: Var,
    pub backward: Var,
    pub order: usize,
}

impl Diffusion {
    pub fn new(tape: &mut Tape, adjacency: Var, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Contract("diffusion order must be at least 1".into()));
        }
        let forward = tape.row_normalize(adjacency);
        let backward = tape.transpose(forward);
        Ok(Self {
            forward,
            backward,
            order,
        })
    }

    /// `[U, ÃU, .., Ã^{K-1}U, U, ÃᵀU, .., (Ãᵀ)^{K-1}U]`, shape `N x 2KF`.
    pub fn features(&self, tape: &mut Tape, u: Var) -> Result<Var> {
        let mut parts = Vec::with_capacity(2 * self.order);
        for op in [self.forward, self.backward] {
            let mut cur = u;
            parts.push(cur);
            for _ in 1..self.order {
                cur = tape.matmul(op, cur)?;
                parts.push(cur);
            }
        }
        tape.concat_cols(&parts)
    }
}

/// Bound weights of one message-passing layer.
#[derive(Clone, Copy, Debug)]
pub struct MpnnParams {
    pub theta: Var,
    pub bias: Var,
}

/// Pre-activation message passing on precomputed diffusion features.
pub fn mpnn_linear(tape: &mut Tape, features: Var, p: MpnnParams) -> Result<Var> {
    let z = tape.matmul(features, p.theta)?;
    tape.add_bias(z, p.bias)
}

/// `tanh(Σ_k Ã^k U Θ_k + (Ãᵀ)^k U Θ'_k + b)`.
pub fn mpnn(tape: &mut Tape, u: Var, diffusion: &Diffusion, p: MpnnParams) -> Result<Var> {
    let f = diffusion.features(tape, u)?;
    let z = mpnn_linear(tape, f, p)?;
    Ok(tape.tanh(z))
}

#[derive(Clone, Copy, Debug)]
pub struct GateParams {
    pub reset: MpnnParams,
    pub update: MpnnParams,
    pub candidate: MpnnParams,
}

/// One GRU update where every gate is a message-passing layer over `[x ‖ m ‖ h]`.
///
/// Fails with a divergence error carrying `step` if the new state is not finite.
pub fn mpgru_step(
    tape: &mut Tape,
    x: Var,
    m: Var,
    h_prev: Var,
    diffusion: &Diffusion,
    gates: &GateParams,
    step: usize,
) -> Result<Var> {
    let z = tape.concat_cols(&[x, m, h_prev])?;
    let zf = diffusion.features(tape, z)?;
    let r = mpnn_linear(tape, zf, gates.reset)?;
    let r = tape.sigmoid(r);
    let u = mpnn_linear(tape, zf, gates.update)?;
    let u = tape.sigmoid(u);
    let rh = tape.mul(r, h_prev)?;
    let zc = tape.concat_cols(&[x, m, rh])?;
    let c = mpnn(tape, zc, diffusion, gates.candidate)?;
    let carry = tape.mul(u, h_prev)?;
    let keep = tape.one_minus(u);
    let fresh = tape.mul(keep, c)?;
    let h = tape.add(carry, fresh)?;
    if !tape.value(h).is_finite() {
        return Err(Error::Divergence {
            step,
            message: "recurrent state became non-finite".into(),
        });
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{SeededRng, Tensor2};

    fn rand(rng: &mut SeededRng, r: usize, c: usize) -> Tensor2 {
        Tensor2::from_fn(r, c, |_, _| rng.normal() * 0.5)
    }

    fn line_graph() -> Tensor2 {
        Tensor2::from_fn(4, 4, |i, j| if i.abs_diff(j) <= 1 { 1.0 } else { 0.0 })
    }

    #[test]
    fn order_one_has_no_neighbour_mixing() {
        let mut rng = SeededRng::new(1);
        let u = rand(&mut rng, 4, 3);
        let theta = rand(&mut rng, 6, 2);
        let mut tape = Tape::new();
        let a = tape.constant(line_graph());
        let d = Diffusion::new(&mut tape, a, 1).unwrap();
        let uv = tape.constant(u.clone());
        let p = MpnnParams {
            theta: tape.constant(theta.clone()),
            bias: tape.constant(Tensor2::zeros(1, 2)),
        };
        let out = mpnn(&mut tape, uv, &d, p).unwrap();
        let top = Tensor2::from_fn(3, 2, |i, j| theta.get(i, j) + theta.get(i + 3, j));
        let expect = u.matmul(&top).unwrap().map(f64::tanh);
        assert!(tape.value(out).max_abs_diff(&expect) < 1e-14);
    }

    #[test]
    fn zero_adjacency_keeps_only_self_terms() {
        let mut rng = SeededRng::new(2);
        let u = rand(&mut rng, 4, 2);
        let theta = rand(&mut rng, 8, 3);
        let mut tape = Tape::new();
        let a = tape.constant(Tensor2::zeros(4, 4));
        let d = Diffusion::new(&mut tape, a, 2).unwrap();
        let uv = tape.constant(u.clone());
        let p = MpnnParams {
            theta: tape.constant(theta.clone()),
            bias: tape.constant(Tensor2::zeros(1, 3)),
        };
        let out = mpnn(&mut tape, uv, &d, p).unwrap();
        // Blocks are [U, ÃU, U, ÃᵀU]; only the first and third survive.
        let self_w = Tensor2::from_fn(2, 3, |i, j| theta.get(i, j) + theta.get(i + 4, j));
        let expect = u.matmul(&self_w).unwrap().map(f64::tanh);
        assert!(tape.value(out).max_abs_diff(&expect) < 1e-14);
    }

    #[test]
    fn line_graph_neighbour_sum_oracle() {
        // Scalar features, order 2, weights θ0, θ1 (forward) and φ0, φ1 (transpose).
        let u = [1.0, -2.0, 0.5, 3.0];
        let (t0, t1, p0, p1, b) = (0.3, -0.7, 0.2, 0.9, 0.05);
        // Row-normalized line graph with self loops: ends have degree 2, middle 3.
        let deg = [2.0, 3.0, 3.0, 2.0];
        let nbrs = |i: usize| -> Vec<usize> { (0..4).filter(|&j| i.abs_diff(j) <= 1).collect() };
        let fwd: Vec<f64> = (0..4).map(|i| nbrs(i).iter().map(|&j| u[j] / deg[i]).sum()).collect();
        let bwd: Vec<f64> = (0..4).map(|i| nbrs(i).iter().map(|&j| u[j] / deg[j]).sum()).collect();
        let expect: Vec<f64> = (0..4)
            .map(|i| (t0 * u[i] + t1 * fwd[i] + p0 * u[i] + p1 * bwd[i] + b).tanh())
            .collect();

        let mut tape = Tape::new();
        let a = tape.constant(line_graph());
        let d = Diffusion::new(&mut tape, a, 2).unwrap();
        let uv = tape.constant(Tensor2::new(4, 1, u.to_vec()).unwrap());
        let p = MpnnParams {
            theta: tape.constant(Tensor2::new(4, 1, vec![t0, t1, p0, p1]).unwrap()),
            bias: tape.constant(Tensor2::scalar(b)),
        };
        let out = mpnn(&mut tape, uv, &d, p).unwrap();
        for (got, want) in tape.value(out).data().iter().zip(&expect) {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
    }

    fn gates(tape: &mut Tape, fill: impl Fn(usize, usize) -> Tensor2, d: usize) -> GateParams {
        let rows = 2 * 2 * (2 + d);
        let mut layer = || MpnnParams {
            theta: tape.param(fill(rows, d)),
            bias: tape.param(Tensor2::zeros(1, d)),
        };
        GateParams {
            reset: layer(),
            update: layer(),
            candidate: layer(),
        }
    }

    #[test]
    fn zero_params_halve_the_state() {
        let mut rng = SeededRng::new(3);
        let h = rand(&mut rng, 3, 4);
        let mut tape = Tape::new();
        let a = tape.constant(Tensor2::filled(3, 3, 1.0));
        let d = Diffusion::new(&mut tape, a, 2).unwrap();
        let g = gates(&mut tape, Tensor2::zeros, 4);
        let x = tape.constant(rand(&mut rng, 3, 1));
        let m = tape.constant(Tensor2::filled(3, 1, 1.0));
        let hv = tape.constant(h.clone());
        let next = mpgru_step(&mut tape, x, m, hv, &d, &g, 0).unwrap();
        assert!(tape.value(next).max_abs_diff(&h.map(|v| 0.5 * v)) < 1e-15);
    }

    #[test]
    fn saturated_update_gate_carries_state() {
        let mut rng = SeededRng::new(4);
        let h = rand(&mut rng, 3, 2);
        let mut tape = Tape::new();
        let a = tape.constant(Tensor2::filled(3, 3, 1.0));
        let d = Diffusion::new(&mut tape, a, 2).unwrap();
        let mut g = gates(&mut tape, |r, c| Tensor2::from_fn(r, c, |_, _| 0.1), 2);
        g.update.bias = tape.constant(Tensor2::filled(1, 2, 100.0));
        let x = tape.constant(rand(&mut rng, 3, 1));
        let m = tape.constant(Tensor2::filled(3, 1, 1.0));
        let hv = tape.constant(h.clone());
        let next = mpgru_step(&mut tape, x, m, hv, &d, &g, 0).unwrap();
        assert!(tape.value(next).max_abs_diff(&h) < 1e-12);
    }

    #[test]
    fn non_finite_state_reports_step() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor2::filled(2, 2, 1.0));
        let d = Diffusion::new(&mut tape, a, 2).unwrap();
        let g = gates(&mut tape, |r, c| Tensor2::filled(r, c, 1.0), 1);
        let x = tape.constant(Tensor2::zeros(2, 1));
        let m = tape.constant(Tensor2::zeros(2, 1));
        let h = tape.constant(Tensor2::from_vec_unchecked(2, 1, vec![f64::INFINITY, 0.0]));
        let err = mpgru_step(&mut tape, x, m, h, &d, &g, 7).unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 7, .. }), "{err}");
    }

    #[test]
    fn state_norm_gradient_matches_finite_differences() {
        let n = 3;
        let dim = 2;
        let mut rng = SeededRng::new(5);
        let adj = Tensor2::from_fn(n, n, |i, j| if i.abs_diff(j) <= 1 { 1.0 } else { 0.0 });
        let x = rand(&mut rng, n, 1);
        let mask = Tensor2::new(n, 1, vec![1.0, 0.0, 1.0]).unwrap();
        let h0 = rand(&mut rng, n, dim);
        let rows = 4 * (2 + dim);
        let weights: Vec<Tensor2> = (0..3)
            .flat_map(|_| [rand(&mut rng, rows, dim), rand(&mut rng, 1, dim)])
            .collect();

        let eval = |w: &[Tensor2], grad: bool| {
            let mut tape = Tape::new();
            let a = tape.constant(adj.clone());
            let d = Diffusion::new(&mut tape, a, 2).unwrap();
            let vars: Vec<Var> = w
                .iter()
                .map(|t| if grad { tape.param(t.clone()) } else { tape.constant(t.clone()) })
                .collect();
            let layer = |k: usize| MpnnParams {
                theta: vars[2 * k],
                bias: vars[2 * k + 1],
            };
            let g = GateParams {
                reset: layer(0),
                update: layer(1),
                candidate: layer(2),
            };
            let xv = tape.constant(x.clone());
            let mv = tape.constant(mask.clone());
            let hv = tape.constant(h0.clone());
            let h = mpgru_step(&mut tape, xv, mv, hv, &d, &g, 0).unwrap();
            let sq = tape.mul(h, h).unwrap();
            let ones = tape.constant(Tensor2::filled(n, dim, 1.0));
            let mean = tape.masked_mean(sq, ones).unwrap();
            let loss = tape.scale(mean, (n * dim) as f64);
            let value = tape.value(loss).get(0, 0);
            let grads = if grad {
                let g = tape.backward(loss).unwrap();
                vars.iter().map(|&v| g.get(v)).collect()
            } else {
                Vec::new()
            };
            (value, grads)
        };

        let (_, analytic) = eval(&weights, true);
        let h = 1e-5;
        for (p, grad) in analytic.iter().enumerate() {
            for idx in 0..weights[p].len() {
                let mut plus = weights.clone();
                plus[p].data_mut()[idx] += h;
                let mut minus = weights.clone();
                minus[p].data_mut()[idx] -= h;
                let numeric = (eval(&plus, false).0 - eval(&minus, false).0) / (2.0 * h);
                let a = grad.data()[idx];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(rel < 1e-4, "param {p} index {idx}: {a} vs {numeric}");
            }
        }
    }
}
