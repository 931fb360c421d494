//! Dynamically recorded reverse-mode tape over coarse tensor operations.
//!
//! Every operation evaluates eagerly and appends a node. Nodes are stored in
//! creation order, which is already a topological order, so the backward
//! pass is a single reverse sweep. A tape is single-threaded and short-lived:
//! build one per forward pass and drop it after `backward`.

use super::ops::{self, gemm};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(ParamId),
    MatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    AddRow { a: Var, row: Var },
    MulRow { a: Var, row: Var },
    Mul(Var, Var),
    MulConst { a: Var, factor: Vec<f64> },
    Scale { a: Var, factor: f64 },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Softmax(Var),
    Gelu(Var),
    Sigmoid(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows { a: Var, start: usize },
    SliceCols { a: Var, start: usize },
    Sum(Var),
    FocalLogits { logits: Var, targets: Vec<f64>, alpha: f64, gamma: f64 },
    FocalProbs { probs: Var, targets: Vec<f64>, alpha: f64, gamma: f64, eps: f64 },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients of one scalar with respect to every node that needs them.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<Tensor> {
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(self.shapes[v.0].clone(), g.clone()).expect("grad shape"))
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn accumulate(slot: &mut Option<Vec<f64>>, delta: &[f64]) {
    match slot {
        Some(g) => {
            for (x, d) in g.iter_mut().zip(delta) {
                *x += d;
            }
        }
        None => *slot = Some(delta.to_vec()),
    }
}

fn accumulate_owned(slot: &mut Option<Vec<f64>>, delta: Vec<f64>) {
    match slot {
        Some(g) => {
            for (x, d) in g.iter_mut().zip(&delta) {
                *x += d;
            }
        }
        None => *slot = Some(delta),
    }
}

/// Per-element focal loss and its derivative with respect to the logit.
/// Soft targets blend the positive and negative branches linearly.
pub(crate) fn focal_logit_terms(x: f64, t: f64, alpha: f64, gamma: f64) -> (f64, f64) {
    let p = ops::sigmoid_scalar(x);
    let q = ops::sigmoid_scalar(-x);
    let log_p = -ops::softplus(-x);
    let log_q = -ops::softplus(x);
    let (mut loss, mut grad) = (0.0, 0.0);
    if t != 0.0 {
        let w = q.powf(gamma);
        loss += t * -alpha * w * log_p;
        grad += t * alpha * w * (gamma * p * log_p - q);
    }
    if t != 1.0 {
        let w = p.powf(gamma);
        loss += (1.0 - t) * -(1.0 - alpha) * w * log_q;
        grad += (1.0 - t) * (1.0 - alpha) * w * (p - gamma * q * log_q);
    }
    (loss, grad)
}

/// Focal loss evaluated on a probability clamped into `[eps, 1 - eps]`.
/// The derivative is zero where the clamp is active.
pub(crate) fn focal_prob_terms(p: f64, t: f64, alpha: f64, gamma: f64, eps: f64) -> (f64, f64) {
    let clamped = !(eps..=1.0 - eps).contains(&p);
    let p = p.clamp(eps, 1.0 - eps);
    let q = 1.0 - p;
    let (mut loss, mut grad) = (0.0, 0.0);
    if t != 0.0 {
        loss += t * -alpha * q.powf(gamma) * p.ln();
        grad += t * -alpha * (-gamma * q.powf(gamma - 1.0) * p.ln() + q.powf(gamma) / p);
    }
    if t != 1.0 {
        loss += (1.0 - t) * -(1.0 - alpha) * p.powf(gamma) * q.ln();
        grad += (1.0 - t) * -(1.0 - alpha) * (gamma * p.powf(gamma - 1.0) * q.ln() - p.powf(gamma) / q);
    }
    (loss, if clamped { 0.0 } else { grad })
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input tensor. `requires_grad` makes it a differentiation target.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Records a parameter. Parameters of frozen stores enter as constants.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = store.value(id).clone();
        if store.is_frozen() {
            return self.constant(value);
        }
        self.nodes.push(Node {
            value,
            op: Op::Param(id),
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul { a, b, trans_b: false }, &[a, b]))
    }

    /// `a · bᵀ`; with `b` a `[out × in]` weight this is a linear layer.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::matmul_nt(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul { a, b, trans_b: true }, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("add", x, y)?;
        let mut out = x.clone();
        for (o, v) in out.data_mut().iter_mut().zip(y.data()) {
            *o += v;
        }
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("mul", x, y)?;
        let mut out = x.clone();
        for (o, v) in out.data_mut().iter_mut().zip(y.data()) {
            *o *= v;
        }
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a length-`cols` vector to every row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        if r.numel() != x.cols() {
            return Err(Error::dim("add_row", x.shape(), r.shape()));
        }
        let c = x.cols();
        let mut out = x.clone();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o += r.data()[i % c];
        }
        Ok(self.push(out, Op::AddRow { a, row }, &[a, row]))
    }

    /// Multiplies every row elementwise by a length-`cols` vector.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        if r.numel() != x.cols() {
            return Err(Error::dim("mul_row", x.shape(), r.shape()));
        }
        let c = x.cols();
        let mut out = x.clone();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o *= r.data()[i % c];
        }
        Ok(self.push(out, Op::MulRow { a, row }, &[a, row]))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|v| v * factor);
        self.push(out, Op::Scale { a, factor }, &[a])
    }

    /// Elementwise product with a constant of the same size (dropout masks).
    pub fn mul_const(&mut self, a: Var, factor: Vec<f64>) -> Result<Var> {
        let x = self.value(a);
        if factor.len() != x.numel() {
            return Err(Error::dim("mul_const", x.shape(), &[factor.len()]));
        }
        let mut out = x.clone();
        for (o, f) in out.data_mut().iter_mut().zip(&factor) {
            *o *= f;
        }
        Ok(self.push(out, Op::MulConst { a, factor }, &[a]))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let r = ops::layer_norm_raw(self.value(x), self.value(gain), self.value(bias), eps)?;
        let out = Tensor::new(self.value(x).shape().to_vec(), r.out)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat: r.xhat,
                rstd: r.rstd,
            },
            &[x, gain, bias],
        ))
    }

    /// Row-wise softmax (last axis).
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let axis = t.rank().saturating_sub(1);
        let out = ops::softmax(t, axis)?;
        Ok(self.push(out, Op::Softmax(x), &[x]))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = ops::gelu(self.value(x));
        self.push(out, Op::Gelu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = ops::sigmoid(self.value(x));
        self.push(out, Op::Sigmoid(x), &[x])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts
            .first()
            .map(|&v| self.value(v).cols())
            .ok_or_else(|| Error::Contract("concat_rows of nothing".into()))?;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols || t.rank() != 2 {
                return Err(Error::dim("concat_rows", &[rows, cols], t.shape()));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::matrix_unchecked(rows, cols, data);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&v| self.value(v).rows())
            .ok_or_else(|| Error::Contract("concat_cols of nothing".into()))?;
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows || t.rank() != 2 {
                return Err(Error::dim("concat_cols", &[rows, cols], t.shape()));
            }
            cols += t.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::matrix_unchecked(rows, cols, data);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 || start + len > t.rows() {
            return Err(Error::dim("slice_rows", t.shape(), &[start, len]));
        }
        let c = t.cols();
        let out = Tensor::matrix_unchecked(len, c, t.data()[start * c..(start + len) * c].to_vec());
        Ok(self.push(out, Op::SliceRows { a, start }, &[a]))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 || start + len > t.cols() {
            return Err(Error::dim("slice_cols", t.shape(), &[start, len]));
        }
        let rows = t.rows();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&t.row(r)[start..start + len]);
        }
        let out = Tensor::matrix_unchecked(rows, len, data);
        Ok(self.push(out, Op::SliceCols { a, start }, &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), &[a])
    }

    /// Summed sigmoid focal loss over all logits against same-sized targets.
    pub fn focal_loss_sum(&mut self, logits: Var, targets: Vec<f64>, alpha: f64, gamma: f64) -> Result<Var> {
        let x = self.value(logits);
        if targets.len() != x.numel() {
            return Err(Error::dim("focal_loss_sum", x.shape(), &[targets.len()]));
        }
        let total = x
            .data()
            .iter()
            .zip(&targets)
            .map(|(&l, &t)| focal_logit_terms(l, t, alpha, gamma).0)
            .sum();
        Ok(self.push(
            Tensor::scalar(total),
            Op::FocalLogits {
                logits,
                targets,
                alpha,
                gamma,
            },
            &[logits],
        ))
    }

    /// Summed focal loss on probabilities clamped into `[eps, 1 - eps]`.
    pub fn focal_prob_sum(
        &mut self,
        probs: Var,
        targets: Vec<f64>,
        alpha: f64,
        gamma: f64,
        eps: f64,
    ) -> Result<Var> {
        let x = self.value(probs);
        if targets.len() != x.numel() {
            return Err(Error::dim("focal_prob_sum", x.shape(), &[targets.len()]));
        }
        let total = x
            .data()
            .iter()
            .zip(&targets)
            .map(|(&p, &t)| focal_prob_terms(p, t, alpha, gamma, eps).0)
            .sum();
        Ok(self.push(
            Tensor::scalar(total),
            Op::FocalProbs {
                probs,
                targets,
                alpha,
                gamma,
                eps,
            },
            &[probs],
        ))
    }

    /// Reverse sweep from a scalar. Only nodes that require gradients get one.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    /// Backpropagates `loss` and adds the parameter gradients into `store`.
    /// Repeated calls accumulate until the store's gradients are reset.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (node, g) in self.nodes.iter().zip(&grads.grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                if id.store_id() != store.id() {
                    continue;
                }
                for (x, d) in store.grad_mut(*id).data_mut().iter_mut().zip(g) {
                    *x += d;
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let needs = |v: &Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul { a, b, trans_b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let m = av.rows();
                let k = av.cols();
                let n = node.value.cols();
                if needs(a) {
                    let mut da = vec![0.0; m * k];
                    if *trans_b {
                        // b is [n × k]: dA = dC · B
                        gemm(m, n, k, g, (n as isize, 1), bv.data(), (k as isize, 1), 0.0, &mut da);
                    } else {
                        // b is [k × n]: dA = dC · Bᵀ
                        gemm(m, n, k, g, (n as isize, 1), bv.data(), (1, n as isize), 0.0, &mut da);
                    }
                    accumulate_owned(&mut grads[a.0], da);
                }
                if needs(b) {
                    if *trans_b {
                        // dB = dCᵀ · A, shape [n × k]
                        let mut db = vec![0.0; n * k];
                        gemm(n, m, k, g, (1, n as isize), av.data(), (k as isize, 1), 0.0, &mut db);
                        accumulate_owned(&mut grads[b.0], db);
                    } else {
                        // dB = Aᵀ · dC, shape [k × n]
                        let mut db = vec![0.0; k * n];
                        gemm(k, m, n, av.data(), (1, k as isize), g, (n as isize, 1), 0.0, &mut db);
                        accumulate_owned(&mut grads[b.0], db);
                    }
                }
            }
            Op::Add(a, b) => {
                if needs(a) {
                    accumulate(&mut grads[a.0], g);
                }
                if needs(b) {
                    accumulate(&mut grads[b.0], g);
                }
            }
            Op::AddRow { a, row } => {
                if needs(a) {
                    accumulate(&mut grads[a.0], g);
                }
                if needs(row) {
                    let c = node.value.cols();
                    let mut dr = vec![0.0; c];
                    for (i, v) in g.iter().enumerate() {
                        dr[i % c] += v;
                    }
                    accumulate_owned(&mut grads[row.0], dr);
                }
            }
            Op::MulRow { a, row } => {
                let c = node.value.cols();
                let (av, rv) = (self.value(*a).data(), self.value(*row).data());
                if needs(a) {
                    let da = g.iter().enumerate().map(|(i, v)| v * rv[i % c]).collect();
                    accumulate_owned(&mut grads[a.0], da);
                }
                if needs(row) {
                    let mut dr = vec![0.0; c];
                    for (i, v) in g.iter().enumerate() {
                        dr[i % c] += v * av[i];
                    }
                    accumulate_owned(&mut grads[row.0], dr);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if needs(a) {
                    let da = g.iter().zip(bv).map(|(x, y)| x * y).collect();
                    accumulate_owned(&mut grads[a.0], da);
                }
                if needs(b) {
                    let db = g.iter().zip(av).map(|(x, y)| x * y).collect();
                    accumulate_owned(&mut grads[b.0], db);
                }
            }
            Op::MulConst { a, factor } => {
                if needs(a) {
                    let da = g.iter().zip(factor).map(|(x, y)| x * y).collect();
                    accumulate_owned(&mut grads[a.0], da);
                }
            }
            Op::Scale { a, factor } => {
                if needs(a) {
                    accumulate_owned(&mut grads[a.0], g.iter().map(|x| x * factor).collect());
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let d = node.value.cols();
                let rows = node.value.rows();
                let gv = self.value(*gain).data();
                if needs(x) {
                    let mut dx = vec![0.0; rows * d];
                    let mut dxhat = vec![0.0; d];
                    for r in 0..rows {
                        let (mut m1, mut m2) = (0.0, 0.0);
                        for j in 0..d {
                            dxhat[j] = g[r * d + j] * gv[j];
                            m1 += dxhat[j];
                            m2 += dxhat[j] * xhat[r * d + j];
                        }
                        m1 /= d as f64;
                        m2 /= d as f64;
                        for j in 0..d {
                            dx[r * d + j] = rstd[r] * (dxhat[j] - m1 - xhat[r * d + j] * m2);
                        }
                    }
                    accumulate_owned(&mut grads[x.0], dx);
                }
                if needs(gain) {
                    let mut dg = vec![0.0; d];
                    for (i, v) in g.iter().enumerate() {
                        dg[i % d] += v * xhat[i];
                    }
                    accumulate_owned(&mut grads[gain.0], dg);
                }
                if needs(bias) {
                    let mut db = vec![0.0; d];
                    for (i, v) in g.iter().enumerate() {
                        db[i % d] += v;
                    }
                    accumulate_owned(&mut grads[bias.0], db);
                }
            }
            Op::Softmax(x) => {
                if needs(x) {
                    let y = node.value.data();
                    let c = node.value.cols();
                    let mut dx = vec![0.0; y.len()];
                    for r in 0..node.value.rows() {
                        let span = r * c..(r + 1) * c;
                        let dot: f64 = g[span.clone()].iter().zip(&y[span.clone()]).map(|(a, b)| a * b).sum();
                        for j in span {
                            dx[j] = y[j] * (g[j] - dot);
                        }
                    }
                    accumulate_owned(&mut grads[x.0], dx);
                }
            }
            Op::Gelu(x) => {
                if needs(x) {
                    let xv = self.value(*x).data();
                    let dx = g
                        .iter()
                        .zip(xv)
                        .map(|(d, &v)| d * (ops::std_normal_cdf(v) + v * ops::std_normal_pdf(v)))
                        .collect();
                    accumulate_owned(&mut grads[x.0], dx);
                }
            }
            Op::Sigmoid(x) => {
                if needs(x) {
                    let dx = g
                        .iter()
                        .zip(node.value.data())
                        .map(|(d, y)| d * y * (1.0 - y))
                        .collect();
                    accumulate_owned(&mut grads[x.0], dx);
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).numel();
                    if needs(p) {
                        accumulate(&mut grads[p.0], &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let rows = node.value.rows();
                let mut col = 0;
                for p in parts {
                    let c = self.value(*p).cols();
                    if needs(p) {
                        let mut dp = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            dp.extend_from_slice(&g[r * total + col..r * total + col + c]);
                        }
                        accumulate_owned(&mut grads[p.0], dp);
                    }
                    col += c;
                }
            }
            Op::SliceRows { a, start } => {
                if needs(a) {
                    let src = self.value(*a);
                    let c = src.cols();
                    let slot = grads[a.0].get_or_insert_with(|| vec![0.0; src.numel()]);
                    for (x, d) in slot[start * c..start * c + g.len()].iter_mut().zip(g) {
                        *x += d;
                    }
                }
            }
            Op::SliceCols { a, start } => {
                if needs(a) {
                    let src = self.value(*a);
                    let c = src.cols();
                    let len = node.value.cols();
                    let slot = grads[a.0].get_or_insert_with(|| vec![0.0; src.numel()]);
                    for r in 0..node.value.rows() {
                        for j in 0..len {
                            slot[r * c + start + j] += g[r * len + j];
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if needs(a) {
                    let n = self.value(*a).numel();
                    accumulate_owned(&mut grads[a.0], vec![g[0]; n]);
                }
            }
            Op::FocalLogits {
                logits,
                targets,
                alpha,
                gamma,
            } => {
                if needs(logits) {
                    let dx = self
                        .value(*logits)
                        .data()
                        .iter()
                        .zip(targets)
                        .map(|(&l, &t)| g[0] * focal_logit_terms(l, t, *alpha, *gamma).1)
                        .collect();
                    accumulate_owned(&mut grads[logits.0], dx);
                }
            }
            Op::FocalProbs {
                probs,
                targets,
                alpha,
                gamma,
                eps,
            } => {
                if needs(probs) {
                    let dx = self
                        .value(*probs)
                        .data()
                        .iter()
                        .zip(targets)
                        .map(|(&p, &t)| g[0] * focal_prob_terms(p, t, *alpha, *gamma, *eps).1)
                        .collect();
                    accumulate_owned(&mut grads[probs.0], dx);
                }
            }
        }
    }
}
