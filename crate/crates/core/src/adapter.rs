//! Attention-adapted adjacency.
//!
//! For each head `l`, `Q = X W_Q`, `K = X W_K` and the head's attention is
//! `softmax_rows(Q Kᵀ / sqrt(d_h))` over the variables of one window. Heads are
//! averaged, then masked by the static support: `A* = pooled ⊙ (A > 0)`. The
//! masked rows are deliberately left unnormalized.

use std::path::Path;

use crate::dataio::csvio::write_matrix_csv;
use crate::dataio::StaticGraph;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor2, Var};

/// Per-window adapted adjacency on a tape.
#[derive(Clone, Debug)]
pub struct AdaptedGraph {
    pub a_star: Var,
    /// Pre-mask pooled attention (row-stochastic).
    pub pooled: Var,
    pub window_start: usize,
    /// Rows left with no weight after masking; those nodes receive no messages.
    pub empty_rows: Vec<usize>,
}

/// One head: `softmax_rows(X W_Q (X W_K)ᵀ / sqrt(d_h))`.
pub fn head_attention(tape: &mut Tape, x: Var, w_q: Var, w_k: Var) -> Result<Var> {
    let d_h = tape.value(w_q).cols();
    if d_h == 0 || tape.value(w_k).cols() != d_h {
        return Err(Error::Contract(format!(
            "head dimension must be positive and equal for W_Q and W_K (got {} and {})",
            d_h,
            tape.value(w_k).cols()
        )));
    }
    let q = tape.matmul(x, w_q)?;
    let k = tape.matmul(x, w_k)?;
    let kt = tape.transpose(k);
    let logits = tape.matmul(q, kt)?;
    tape.softmax_rows(logits, (d_h as f64).sqrt())
}

/// Entrywise mean of the heads.
pub fn pool_heads(tape: &mut Tape, heads: &[Var]) -> Result<Var> {
    match heads.len() {
        0 => Err(Error::Contract("cannot pool zero attention heads".into())),
        1 => Ok(heads[0]),
        l => {
            let sum = tape.add_n(heads)?;
            Ok(tape.scale(sum, 1.0 / l as f64))
        }
    }
}

/// Masks pooled attention with a constant 0/1 support; returns rows that end up empty.
pub fn sparsify(tape: &mut Tape, pooled: Var, support: Var) -> Result<(Var, Vec<usize>)> {
    let a_star = tape.mul(pooled, support)?;
    let v = tape.value(a_star);
    let empty = (0..v.rows())
        .filter(|&i| v.row(i).iter().all(|&w| w == 0.0))
        .collect();
    Ok((a_star, empty))
}

/// Full adapter for one window. `heads` holds `(W_Q, W_K)` per head.
pub fn adapt(
    tape: &mut Tape,
    x: Var,
    heads: &[(Var, Var)],
    support: Var,
    window_start: usize,
) -> Result<AdaptedGraph> {
    let attn = heads
        .iter()
        .map(|&(q, k)| head_attention(tape, x, q, k))
        .collect::<Result<Vec<_>>>()?;
    let pooled = pool_heads(tape, &attn)?;
    let (a_star, empty_rows) = sparsify(tape, pooled, support)?;
    Ok(AdaptedGraph {
        a_star,
        pooled,
        window_start,
        empty_rows,
    })
}

/// Writes an adjacency as an `N x N` CSV labelled with the graph's node ids.
pub fn export_adjacency(
    path: &Path,
    ids: &[String],
    adjacency: &Tensor2,
    comments: &[(String, String)],
) -> Result<()> {
    write_matrix_csv(path, ids, adjacency, comments)
}

/// Convenience wrapper evaluating [`adapt`] outside of training.
pub fn adapted_adjacency(
    x: &Tensor2,
    heads: &[(Tensor2, Tensor2)],
    graph: &StaticGraph,
) -> Result<Tensor2> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let hv: Vec<(Var, Var)> = heads
        .iter()
        .map(|(q, k)| (tape.constant(q.clone()), tape.constant(k.clone())))
        .collect();
    let support = tape.constant(graph.support());
    let adapted = adapt(&mut tape, xv, &hv, support, 0)?;
    Ok(tape.value(adapted.a_star).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn rand(rng: &mut SeededRng, r: usize, c: usize) -> Tensor2 {
        Tensor2::from_fn(r, c, |_, _| rng.normal())
    }

    fn attention(x: &Tensor2, q: &Tensor2, k: &Tensor2) -> Tensor2 {
        let mut tape = Tape::new();
        let (xv, qv, kv) = (
            tape.constant(x.clone()),
            tape.constant(q.clone()),
            tape.constant(k.clone()),
        );
        let a = head_attention(&mut tape, xv, qv, kv).unwrap();
        tape.value(a).clone()
    }

    #[test]
    fn zero_input_gives_uniform_rows() {
        let mut rng = SeededRng::new(1);
        let a = attention(&Tensor2::zeros(5, 8), &rand(&mut rng, 8, 3), &rand(&mut rng, 8, 3));
        for v in a.data() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn two_node_hand_softmax() {
        let x = Tensor2::from_rows(&[&[1.0], &[0.0]]);
        let w = Tensor2::from_rows(&[&[1.0]]);
        let a = attention(&x, &w, &w);
        assert!((a.get(0, 0) - 0.73106).abs() < 1e-5);
        assert!((a.get(0, 1) - 0.26894).abs() < 1e-5);
    }

    #[test]
    fn zero_head_dim_rejected() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor2::zeros(2, 3));
        let q = tape.constant(Tensor2::zeros(3, 0));
        let k = tape.constant(Tensor2::zeros(3, 0));
        assert!(matches!(head_attention(&mut tape, x, q, k), Err(Error::Contract(_))));
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = SeededRng::new(2);
        let x = rand(&mut rng, 6, 4);
        let (q, k) = (rand(&mut rng, 4, 2), rand(&mut rng, 4, 2));
        let perm = [3, 0, 5, 1, 4, 2];
        let a = attention(&x, &q, &k);
        let ap = attention(&x.permute_rows(&perm), &q, &k);
        assert!(ap.max_abs_diff(&a.permute_square(&perm)) < 1e-14);
    }

    #[test]
    fn pooling_examples() {
        let mut tape = Tape::new();
        assert!(pool_heads(&mut tape, &[]).is_err());
        let h1 = tape.constant(Tensor2::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let h2 = tape.constant(Tensor2::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]));
        let single = pool_heads(&mut tape, &[h1]).unwrap();
        assert_eq!(tape.value(single), tape.value(h1));
        let p = pool_heads(&mut tape, &[h1, h2]).unwrap();
        assert_eq!(tape.value(p), &Tensor2::filled(2, 2, 0.5));
    }

    #[test]
    fn pooled_random_stochastic_matrices_stay_stochastic() {
        let mut rng = SeededRng::new(3);
        let mut tape = Tape::new();
        let heads: Vec<Var> = (0..7)
            .map(|_| {
                let logits = tape.constant(rand(&mut rng, 5, 5));
                tape.softmax_rows(logits, 1.0).unwrap()
            })
            .collect();
        let p = pool_heads(&mut tape, &heads).unwrap();
        for i in 0..5 {
            assert!((tape.value(p).row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sparsify_examples() {
        let mut tape = Tape::new();
        let pooled = tape.constant(Tensor2::filled(2, 2, 0.5));
        let support = tape.constant(Tensor2::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]));
        let (a, empty) = sparsify(&mut tape, pooled, support).unwrap();
        assert_eq!(tape.value(a), &Tensor2::from_rows(&[&[0.5, 0.5], &[0.0, 0.5]]));
        assert!(empty.is_empty());

        let dense = tape.constant(Tensor2::filled(2, 2, 1.0));
        let (a, _) = sparsify(&mut tape, pooled, dense).unwrap();
        assert_eq!(tape.value(a), tape.value(pooled));

        let none = tape.constant(Tensor2::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]));
        let (_, empty) = sparsify(&mut tape, pooled, none).unwrap();
        assert_eq!(empty, vec![1]);
    }

    #[test]
    fn zero_parameters_give_uniform_masked_rows() {
        let mut rng = SeededRng::new(4);
        let x = rand(&mut rng, 4, 6);
        let g = StaticGraph::from_pattern(4, |i, j| i.abs_diff(j) == 1).unwrap();
        let heads = vec![(Tensor2::zeros(6, 3), Tensor2::zeros(6, 3))];
        let a = adapted_adjacency(&x, &heads, &g).unwrap();
        assert_eq!(a, g.support().map(|s| s * 0.25));
    }

    #[test]
    fn identical_windows_identical_graphs() {
        let mut rng = SeededRng::new(5);
        let x = rand(&mut rng, 4, 6);
        let g = StaticGraph::from_pattern(4, |_, _| true).unwrap();
        let heads = vec![(rand(&mut rng, 6, 2), rand(&mut rng, 6, 2))];
        assert_eq!(
            adapted_adjacency(&x, &heads, &g).unwrap(),
            adapted_adjacency(&x.clone(), &heads, &g).unwrap()
        );
    }

    #[test]
    fn shared_head_weights_pool_to_single_head() {
        let mut rng = SeededRng::new(6);
        let x = rand(&mut rng, 5, 4);
        let g = StaticGraph::from_pattern(5, |_, _| true).unwrap();
        let h = (rand(&mut rng, 4, 2), rand(&mut rng, 4, 2));
        let one = adapted_adjacency(&x, std::slice::from_ref(&h), &g).unwrap();
        let three = adapted_adjacency(&x, &[h.clone(), h.clone(), h], &g).unwrap();
        assert!(one.max_abs_diff(&three) < 1e-15);
    }

    #[test]
    fn gradient_of_sum_matches_finite_differences() {
        let mut rng = SeededRng::new(7);
        let x = rand(&mut rng, 4, 5);
        let wq = rand(&mut rng, 5, 3);
        let wk = rand(&mut rng, 5, 3);
        let g = StaticGraph::from_pattern(4, |i, j| (i + j) % 3 != 0).unwrap();
        let total = |q: &Tensor2| adapted_adjacency(&x, &[(q.clone(), wk.clone())], &g).unwrap().sum();

        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let qv = tape.param(wq.clone());
        let kv = tape.param(wk.clone());
        let support = tape.constant(g.support());
        let adapted = adapt(&mut tape, xv, &[(qv, kv)], support, 0).unwrap();
        let ones = tape.constant(Tensor2::filled(4, 4, 1.0));
        let mean = tape.masked_mean(adapted.a_star, ones).unwrap();
        let loss = tape.scale(mean, 16.0);
        let analytic = tape.backward(loss).unwrap().get(qv);

        let h = 1e-5;
        for idx in 0..wq.len() {
            let mut plus = wq.clone();
            plus.data_mut()[idx] += h;
            let mut minus = wq.clone();
            minus.data_mut()[idx] -= h;
            let numeric = (total(&plus) - total(&minus)) / (2.0 * h);
            let a = analytic.data()[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            assert!(rel < 1e-4, "index {idx}: {a} vs {numeric}");
        }
    }
}
