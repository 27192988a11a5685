//! Wengert tape: forward ops are recorded in sequence, then replayed in
//! reverse to accumulate gradients via the chain rule.
//!
//! A tape is confined to one training step on one thread. Leaves are either
//! parameters (gradients wanted) or constants (inputs, noise draws). Every
//! forward kernel is shared with the plain evaluation path in [`super::math`],
//! so recorded and unrecorded evaluation agree bitwise.

use crate::error::{Error, Result};

use super::math;
use super::tensor::Tensor;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    Scale(usize, f64),
    AddScalar(usize, f64),
    Tanh(usize),
    Relu(usize),
    Exp(usize),
    Clamp(usize, f64, f64),
    Softmax(usize),
    LogSoftmax(usize),
    LayerNorm(usize, f64),
    MeanRows(usize),
    SumAll(usize),
    SliceCols(usize, usize, usize),
    ConcatCols(Vec<usize>),
    NllMean(usize, Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Forward values of all nodes in recording order.
    pub fn node_values(&self) -> impl Iterator<Item = &Tensor> {
        self.nodes.iter().map(|n| &n.value)
    }

    /// Leaf that never receives a gradient (inputs, frozen noise).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf: `backward` populates its gradient slot.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, a: Var, value: Tensor, op: Op) -> Var {
        let rg = self.nodes[a.0].requires_grad;
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, value: Tensor, op: Op) -> Var {
        let rg = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        self.push(value, op, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = math::matmul(self.value(a), self.value(b))?;
        Ok(self.binary(a, b, v, Op::MatMul(a.0, b.0)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = math::transpose(self.value(a));
        self.unary(a, v, Op::Transpose(a.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = math::add(self.value(a), self.value(b))?;
        Ok(self.binary(a, b, v, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = math::sub(self.value(a), self.value(b))?;
        Ok(self.binary(a, b, v, Op::Sub(a.0, b.0)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = math::mul(self.value(a), self.value(b))?;
        Ok(self.binary(a, b, v, Op::Mul(a.0, b.0)))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let v = math::add_row(self.value(a), self.value(row))?;
        Ok(self.binary(a, row, v, Op::AddRow(a.0, row.0)))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let v = math::mul_row(self.value(a), self.value(row))?;
        Ok(self.binary(a, row, v, Op::MulRow(a.0, row.0)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = math::map(self.value(a), |x| x * k);
        self.unary(a, v, Op::Scale(a.0, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let v = math::map(self.value(a), |x| x + k);
        self.unary(a, v, Op::AddScalar(a.0, k))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = math::map(self.value(a), f64::tanh);
        self.unary(a, v, Op::Tanh(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = math::map(self.value(a), |x| x.max(0.0));
        self.unary(a, v, Op::Relu(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = math::map(self.value(a), f64::exp);
        self.unary(a, v, Op::Exp(a.0))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = math::clamp(self.value(a), lo, hi);
        self.unary(a, v, Op::Clamp(a.0, lo, hi))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let v = math::softmax(self.value(a));
        self.unary(a, v, Op::Softmax(a.0))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let v = math::log_softmax(self.value(a));
        self.unary(a, v, Op::LogSoftmax(a.0))
    }

    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let v = math::layer_norm(self.value(a), eps);
        self.unary(a, v, Op::LayerNorm(a.0, eps))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = math::mean_rows(self.value(a));
        self.unary(a, v, Op::MeanRows(a.0))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(math::sum_all(self.value(a)));
        self.unary(a, v, Op::SumAll(a.0))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let v = math::slice_cols(self.value(a), start, len)?;
        Ok(self.unary(a, v, Op::SliceCols(a.0, start, len)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|p| self.value(*p)).collect();
        let v = math::concat_cols(&tensors)?;
        let rg = parts.iter().any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push(v, Op::ConcatCols(parts.iter().map(|p| p.0).collect()), rg))
    }

    /// Mean over rows of `-logp[r, labels[r]]`; `logp` must hold log-probabilities.
    pub fn nll_mean(&mut self, logp: Var, labels: &[usize]) -> Result<Var> {
        let v = Tensor::scalar(math::nll_mean(self.value(logp), labels)?);
        Ok(self.unary(logp, v, Op::NllMean(logp.0, labels.to_vec())))
    }

    /// x @ w + bias, the affine layer.
    pub fn affine(&mut self, x: Var, w: Var, bias: Var) -> Result<Var> {
        let h = self.matmul(x, w)?;
        self.add_row(h, bias)
    }

    /// Scaled dot-product attention over full (unmasked) sequences.
    pub fn attention(&mut self, q: Var, k: Var, v: Var) -> Result<Var> {
        let dk = self.value(k).cols() as f64;
        let kt = self.transpose(k);
        let scores = self.matmul(q, kt)?;
        let scaled = self.scale(scores, 1.0 / dk.sqrt());
        let weights = self.softmax(scaled);
        self.matmul(weights, v)
    }

    /// Recomputes every node from the recorded ops and leaf values.
    /// Used to check that a record replays bit-identically.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Leaf => node.value.clone(),
                Op::MatMul(a, b) => math::matmul(&values[*a], &values[*b])?,
                Op::Transpose(a) => math::transpose(&values[*a]),
                Op::Add(a, b) => math::add(&values[*a], &values[*b])?,
                Op::Sub(a, b) => math::sub(&values[*a], &values[*b])?,
                Op::Mul(a, b) => math::mul(&values[*a], &values[*b])?,
                Op::AddRow(a, b) => math::add_row(&values[*a], &values[*b])?,
                Op::MulRow(a, b) => math::mul_row(&values[*a], &values[*b])?,
                Op::Scale(a, k) => math::map(&values[*a], |x| x * k),
                Op::AddScalar(a, k) => math::map(&values[*a], |x| x + k),
                Op::Tanh(a) => math::map(&values[*a], f64::tanh),
                Op::Relu(a) => math::map(&values[*a], |x| x.max(0.0)),
                Op::Exp(a) => math::map(&values[*a], f64::exp),
                Op::Clamp(a, lo, hi) => math::clamp(&values[*a], *lo, *hi),
                Op::Softmax(a) => math::softmax(&values[*a]),
                Op::LogSoftmax(a) => math::log_softmax(&values[*a]),
                Op::LayerNorm(a, eps) => math::layer_norm(&values[*a], *eps),
                Op::MeanRows(a) => math::mean_rows(&values[*a]),
                Op::SumAll(a) => Tensor::scalar(math::sum_all(&values[*a])),
                Op::SliceCols(a, start, len) => math::slice_cols(&values[*a], *start, *len)?,
                Op::ConcatCols(parts) => {
                    let refs: Vec<&Tensor> = parts.iter().map(|p| &values[*p]).collect();
                    math::concat_cols(&refs)?
                }
                Op::NllMean(a, labels) => Tensor::scalar(math::nll_mean(&values[*a], labels)?),
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Reverse pass from a scalar loss. Every parameter leaf gets a gradient;
    /// parameters the loss does not reach get exact zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_val = &self.nodes[loss.0].value;
        if loss_val.len() != 1 {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got {}x{}",
                loss_val.rows(),
                loss_val.cols()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        // Unreached parameters get exact zero.
        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.rows(), node.value.cols()));
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], target: usize, delta: Tensor) -> Result<()> {
        if !self.nodes[target].requires_grad {
            return Ok(());
        }
        match &mut grads[target] {
            Some(g) => *g = math::add(g, &delta)?,
            slot @ None => *slot = Some(delta),
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let val = |idx: usize| &self.nodes[idx].value;
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let da = math::matmul(g, &math::transpose(val(*b)))?;
                let db = math::matmul(&math::transpose(val(*a)), g)?;
                self.accumulate(grads, *a, da)?;
                self.accumulate(grads, *b, db)?;
            }
            Op::Transpose(a) => {
                self.accumulate(grads, *a, math::transpose(g))?;
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.clone())?;
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, math::map(g, |x| -x))?;
            }
            Op::Mul(a, b) => {
                self.accumulate(grads, *a, math::mul(g, val(*b))?)?;
                self.accumulate(grads, *b, math::mul(g, val(*a))?)?;
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *row, col_sums(g))?;
            }
            Op::MulRow(a, row) => {
                let da = math::mul_row(g, val(*row))?;
                let prod = math::mul(g, val(*a))?;
                self.accumulate(grads, *a, da)?;
                self.accumulate(grads, *row, col_sums(&prod))?;
            }
            Op::Scale(a, k) => {
                self.accumulate(grads, *a, math::map(g, |x| x * k))?;
            }
            Op::AddScalar(a, _) => {
                self.accumulate(grads, *a, g.clone())?;
            }
            Op::Tanh(a) => {
                let out = &self.nodes[i].value;
                let da = Tensor::from_fn(g.rows(), g.cols(), |r, c| {
                    let t = out.get(r, c);
                    g.get(r, c) * (1.0 - t * t)
                });
                self.accumulate(grads, *a, da)?;
            }
            Op::Relu(a) => {
                let x = val(*a);
                let da = Tensor::from_fn(g.rows(), g.cols(), |r, c| {
                    if x.get(r, c) > 0.0 {
                        g.get(r, c)
                    } else {
                        0.0
                    }
                });
                self.accumulate(grads, *a, da)?;
            }
            Op::Exp(a) => {
                self.accumulate(grads, *a, math::mul(g, &self.nodes[i].value)?)?;
            }
            Op::Clamp(a, lo, hi) => {
                let x = val(*a);
                let da = Tensor::from_fn(g.rows(), g.cols(), |r, c| {
                    let v = x.get(r, c);
                    if v >= *lo && v <= *hi {
                        g.get(r, c)
                    } else {
                        0.0
                    }
                });
                self.accumulate(grads, *a, da)?;
            }
            Op::Softmax(a) => {
                let s = &self.nodes[i].value;
                let mut da = Tensor::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let dot: f64 = (0..g.cols()).map(|c| g.get(r, c) * s.get(r, c)).sum();
                    for c in 0..g.cols() {
                        da.set(r, c, s.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                self.accumulate(grads, *a, da)?;
            }
            Op::LogSoftmax(a) => {
                let out = &self.nodes[i].value;
                let mut da = Tensor::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let gsum: f64 = (0..g.cols()).map(|c| g.get(r, c)).sum();
                    for c in 0..g.cols() {
                        da.set(r, c, g.get(r, c) - out.get(r, c).exp() * gsum);
                    }
                }
                self.accumulate(grads, *a, da)?;
            }
            Op::LayerNorm(a, eps) => {
                let x = val(*a);
                let y = &self.nodes[i].value;
                let n = x.cols() as f64;
                let mut da = Tensor::zeros(g.rows(), g.cols());
                for r in 0..x.rows() {
                    let mean_x: f64 = (0..x.cols()).map(|c| x.get(r, c)).sum::<f64>() / n;
                    let var: f64 = (0..x.cols())
                        .map(|c| (x.get(r, c) - mean_x).powi(2))
                        .sum::<f64>()
                        / n;
                    let inv = 1.0 / (var + eps).sqrt();
                    let mean_g: f64 = (0..x.cols()).map(|c| g.get(r, c)).sum::<f64>() / n;
                    let mean_gy: f64 = (0..x.cols())
                        .map(|c| g.get(r, c) * y.get(r, c))
                        .sum::<f64>()
                        / n;
                    for c in 0..x.cols() {
                        da.set(
                            r,
                            c,
                            inv * (g.get(r, c) - mean_g - y.get(r, c) * mean_gy),
                        );
                    }
                }
                self.accumulate(grads, *a, da)?;
            }
            Op::MeanRows(a) => {
                let src = val(*a);
                let m = src.rows() as f64;
                let da = Tensor::from_fn(src.rows(), src.cols(), |_, c| g.get(0, c) / m);
                self.accumulate(grads, *a, da)?;
            }
            Op::SumAll(a) => {
                let src = val(*a);
                let gv = g.get(0, 0);
                self.accumulate(grads, *a, Tensor::filled(src.rows(), src.cols(), gv))?;
            }
            Op::SliceCols(a, start, len) => {
                let src = val(*a);
                let mut da = Tensor::zeros(src.rows(), src.cols());
                for r in 0..g.rows() {
                    for c in 0..*len {
                        da.set(r, start + c, g.get(r, c));
                    }
                }
                self.accumulate(grads, *a, da)?;
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let w = val(*p).cols();
                    if self.nodes[*p].requires_grad {
                        let dp = math::slice_cols(g, offset, w)?;
                        self.accumulate(grads, *p, dp)?;
                    }
                    offset += w;
                }
            }
            Op::NllMean(a, labels) => {
                let src = val(*a);
                let m = labels.len() as f64;
                let gv = g.get(0, 0);
                let mut da = Tensor::zeros(src.rows(), src.cols());
                for (r, &y) in labels.iter().enumerate() {
                    da.set(r, y, -gv / m);
                }
                self.accumulate(grads, *a, da)?;
            }
        }
        Ok(())
    }
}

/// Gradient per tape node, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. this node; zeros when unreachable.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let t = tape.value(v);
                Tensor::zeros(t.rows(), t.cols())
            }
        }
    }

    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

fn col_sums(g: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, g.cols());
    for c in 0..g.cols() {
        let mut s = 0.0;
        for r in 0..g.rows() {
            s += g.get(r, c);
        }
        out.set(0, c, s);
    }
    out
}
