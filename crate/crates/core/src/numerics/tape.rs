//! Reverse-mode automatic differentiation over [`Tensor2`] values.
//!
//! A [`Tape`] records every operation as a node appended after its parents, so
//! node order is already a topological order. [`Tape::backward`] walks the
//! nodes once in reverse and accumulates vector-Jacobian products in a fixed
//! order, which makes repeated backward passes bitwise identical.

use super::tensor::{matmul_nt, matmul_raw, matmul_tn, Tensor2};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryKind {
    Sigmoid,
    Tanh,
    Abs,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(BinaryKind, Var, Var),
    Unary(UnaryKind, Var),
    AddBias(Var, Var),
    AddScalar(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    ConcatCols(Vec<Var>),
    SoftmaxRows(Var, f64),
    Transpose(Var),
    RowNormalize(Var),
    FilterMerge { pred: Var, mask: Var },
    MaskedMean { input: Var, mask: Var, count: usize },
    AddN(Vec<Var>),
}

struct Node {
    value: Tensor2,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor2>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `var`; zeros when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Tensor2 {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                Tensor2::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, var: Var) -> Tensor2 {
        match self.grads[var.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[var.0];
                Tensor2::zeros(r, c)
            }
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, a: &Tensor2, b: &Tensor2) -> Error {
    Error::Shape {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor2, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Registers a trainable leaf.
    pub fn param(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Registers a constant leaf; no gradient is tracked for it.
    pub fn constant(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(shape_err("matmul", av, bv));
        }
        let out = matmul_raw(av, bv);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            let name = match kind {
                BinaryKind::Add => "add",
                BinaryKind::Sub => "sub",
                BinaryKind::Mul => "mul",
            };
            return Err(shape_err(name, av, bv));
        }
        let out = match kind {
            BinaryKind::Add => av.zip_map(bv, |x, y| x + y),
            BinaryKind::Sub => av.zip_map(bv, |x, y| x - y),
            BinaryKind::Mul => av.zip_map(bv, |x, y| x * y),
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Binary(kind, a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn unary(&mut self, kind: UnaryKind, a: Var) -> Var {
        let av = self.value(a);
        let out = match kind {
            UnaryKind::Sigmoid => av.map(sigmoid),
            UnaryKind::Tanh => av.map(f64::tanh),
            UnaryKind::Abs => av.map(f64::abs),
        };
        let rg = self.rg(a);
        self.push(out, Op::Unary(kind, a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Tanh, a)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Abs, a)
    }

    /// Adds a `1 x cols` row vector to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(shape_err("add_bias", av, bv));
        }
        let cols = av.cols();
        let b = bv.data();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(idx, &x)| x + b[idx % cols])
            .collect();
        let out = Tensor2::from_vec_unchecked(av.rows(), cols, data);
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(out, Op::AddBias(a, bias), rg))
    }

    /// Adds a `1 x 1` tensor to every entry of `a`.
    pub fn add_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let (av, sv) = (self.value(a), self.value(s));
        if sv.shape() != (1, 1) {
            return Err(shape_err("add_scalar", av, sv));
        }
        let c = sv.get(0, 0);
        let out = av.map(|x| x + c);
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(out, Op::AddScalar(a, s), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| 1.0 - x);
        let rg = self.rg(a);
        self.push(out, Op::OneMinus(a), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(out, Op::Transpose(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_cols of zero tensors".into()))?;
        let rows = self.value(*first).rows();
        for p in parts {
            let pv = self.value(*p);
            if pv.rows() != rows {
                return Err(shape_err("concat_cols", self.value(*first), pv));
            }
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(i));
            }
        }
        let out = Tensor2::from_vec_unchecked(rows, cols, data);
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Row-wise `softmax(row / scale)`, stabilized by subtracting the row maximum.
    pub fn softmax_rows(&mut self, a: Var, scale: f64) -> Result<Var> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Contract(format!("softmax scale must be > 0, got {scale}")));
        }
        let av = self.value(a);
        if !av.is_finite() {
            return Err(Error::NonFinite("softmax input".into()));
        }
        let out = softmax_rows_raw(av, scale);
        let rg = self.rg(a);
        Ok(self.push(out, Op::SoftmaxRows(a, scale), rg))
    }

    /// Divides each row by its sum; all-zero rows stay zero.
    ///
    /// Inputs are expected to be nonnegative (adjacency weights).
    pub fn row_normalize(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let cols = av.cols();
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(cols.max(1)) {
            let s: f64 = row.iter().sum();
            if s != 0.0 {
                row.iter_mut().for_each(|x| *x /= s);
            }
        }
        let out = Tensor2::from_vec_unchecked(av.rows(), cols, data);
        let rg = self.rg(a);
        self.push(out, Op::RowNormalize(a), rg)
    }

    /// `mask ⊙ observed + (1 − mask) ⊙ pred`, copying observed entries bitwise.
    ///
    /// `observed` and `mask` must be constants; gradient flows only into `pred`
    /// at positions where the mask is zero.
    pub fn filter_merge(&mut self, pred: Var, observed: Var, mask: Var) -> Result<Var> {
        let (pv, ov, mv) = (self.value(pred), self.value(observed), self.value(mask));
        if pv.shape() != ov.shape() {
            return Err(shape_err("filter_merge", pv, ov));
        }
        if pv.shape() != mv.shape() {
            return Err(shape_err("filter_merge", pv, mv));
        }
        if mv.data().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::Contract("filter mask must be binary".into()));
        }
        let data = pv
            .data()
            .iter()
            .zip(ov.data())
            .zip(mv.data())
            .map(|((&p, &o), &m)| if m == 1.0 { o } else { p })
            .collect();
        let out = Tensor2::from_vec_unchecked(pv.rows(), pv.cols(), data);
        let rg = self.rg(pred);
        Ok(self.push(out, Op::FilterMerge { pred, mask }, rg))
    }

    /// Mean of the entries of `a` selected by a 0/1 `mask`, as a `1 x 1` tensor.
    pub fn masked_mean(&mut self, a: Var, mask: Var) -> Result<Var> {
        let (av, mv) = (self.value(a), self.value(mask));
        if av.shape() != mv.shape() {
            return Err(shape_err("masked_mean", av, mv));
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for (&x, &m) in av.data().iter().zip(mv.data()) {
            if m != 0.0 {
                sum += x;
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::EmptySelection("masked mean over zero selected entries"));
        }
        let out = Tensor2::scalar(sum / count as f64);
        let rg = self.rg(a);
        Ok(self.push(
            out,
            Op::MaskedMean {
                input: a,
                mask,
                count,
            },
            rg,
        ))
    }

    /// Elementwise sum of equally shaped tensors, accumulated left to right.
    pub fn add_n(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("add_n of zero tensors".into()))?;
        let mut acc = self.value(*first).clone();
        for p in &parts[1..] {
            let pv = self.value(*p);
            if pv.shape() != acc.shape() {
                return Err(shape_err("add_n", &acc, pv));
            }
            for (a, b) in acc.data_mut().iter_mut().zip(pv.data()) {
                *a += b;
            }
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(acc, Op::AddN(parts.to_vec()), rg))
    }

    /// Runs reverse-mode differentiation from a `1 x 1` loss node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got {}x{}",
                lv.rows(),
                lv.cols()
            )));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Tensor2>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor2::scalar(1.0));

        for idx in (0..n).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor2>], v: Var, contrib: Tensor2) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (a, b) in existing.data_mut().iter_mut().zip(contrib.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(contrib),
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor2, grads: &mut [Option<Tensor2>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    let ga = matmul_nt(g, self.value(*b));
                    self.accumulate(grads, *a, ga);
                }
                if self.rg(*b) {
                    let gb = matmul_tn(self.value(*a), g);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Binary(kind, a, b) => match kind {
                BinaryKind::Add => {
                    self.accumulate(grads, *a, g.clone());
                    self.accumulate(grads, *b, g.clone());
                }
                BinaryKind::Sub => {
                    self.accumulate(grads, *a, g.clone());
                    if self.rg(*b) {
                        self.accumulate(grads, *b, g.map(|x| -x));
                    }
                }
                BinaryKind::Mul => {
                    if self.rg(*a) {
                        self.accumulate(grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                    }
                    if self.rg(*b) {
                        self.accumulate(grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                    }
                }
            },
            Op::Unary(kind, a) => {
                let out = &node.value;
                let ga = match kind {
                    UnaryKind::Sigmoid => g.zip_map(out, |gi, s| gi * s * (1.0 - s)),
                    UnaryKind::Tanh => g.zip_map(out, |gi, t| gi * (1.0 - t * t)),
                    UnaryKind::Abs => g.zip_map(self.value(*a), |gi, x| gi * sign(x)),
                };
                self.accumulate(grads, *a, ga);
            }
            Op::AddBias(a, bias) => {
                self.accumulate(grads, *a, g.clone());
                if self.rg(*bias) {
                    let cols = g.cols();
                    let mut gb = vec![0.0; cols];
                    for i in 0..g.rows() {
                        for (acc, x) in gb.iter_mut().zip(g.row(i)) {
                            *acc += x;
                        }
                    }
                    self.accumulate(grads, *bias, Tensor2::from_vec_unchecked(1, cols, gb));
                }
            }
            Op::AddScalar(a, s) => {
                self.accumulate(grads, *a, g.clone());
                if self.rg(*s) {
                    self.accumulate(grads, *s, Tensor2::scalar(g.sum()));
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.accumulate(grads, *a, g.map(|x| x * c));
            }
            Op::OneMinus(a) => {
                self.accumulate(grads, *a, g.map(|x| -x));
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let pc = self.value(*p).cols();
                    if self.rg(*p) {
                        let gp = Tensor2::from_fn(g.rows(), pc, |i, j| g.get(i, offset + j));
                        self.accumulate(grads, *p, gp);
                    }
                    offset += pc;
                }
            }
            Op::SoftmaxRows(a, scale) => {
                let y = &node.value;
                let cols = y.cols();
                let mut data = Vec::with_capacity(y.len());
                for i in 0..y.rows() {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    data.extend(yr.iter().zip(gr).map(|(&yv, &gv)| yv * (gv - dot) / scale));
                }
                self.accumulate(grads, *a, Tensor2::from_vec_unchecked(y.rows(), cols, data));
            }
            Op::Transpose(a) => {
                self.accumulate(grads, *a, g.transpose());
            }
            Op::RowNormalize(a) => {
                let av = self.value(*a);
                let cols = av.cols();
                let mut data = vec![0.0; av.len()];
                for i in 0..av.rows() {
                    let ar = av.row(i);
                    let s: f64 = ar.iter().sum();
                    if s == 0.0 {
                        continue;
                    }
                    let gr = g.row(i);
                    let dot: f64 = gr.iter().zip(ar).map(|(x, y)| x * y).sum();
                    for j in 0..cols {
                        data[i * cols + j] = gr[j] / s - dot / (s * s);
                    }
                }
                self.accumulate(grads, *a, Tensor2::from_vec_unchecked(av.rows(), cols, data));
            }
            Op::FilterMerge { pred, mask } => {
                let ga = g.zip_map(self.value(*mask), |x, m| if m == 1.0 { 0.0 } else { x });
                self.accumulate(grads, *pred, ga);
            }
            Op::MaskedMean { input, mask, count } => {
                let c = g.get(0, 0) / *count as f64;
                let ga = self.value(*mask).map(|m| if m != 0.0 { c } else { 0.0 });
                self.accumulate(grads, *input, ga);
            }
            Op::AddN(parts) => {
                for p in parts {
                    self.accumulate(grads, *p, g.clone());
                }
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn softmax_rows_raw(a: &Tensor2, scale: f64) -> Tensor2 {
    let cols = a.cols();
    let mut data = Vec::with_capacity(a.len());
    for i in 0..a.rows() {
        let row = a.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = data.len();
        let mut total = 0.0;
        for &x in row {
            let e = ((x - max) / scale).exp();
            total += e;
            data.push(e);
        }
        data[start..].iter_mut().for_each(|e| *e /= total);
    }
    Tensor2::from_vec_unchecked(a.rows(), cols, data)
}
