//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] is built fresh for every forward pass. Each primitive appends
//! a node holding its value; [`Graph::backward`] walks the tape in reverse
//! and accumulates adjoints into every node that depends on a
//! gradient-requiring leaf. Nodes that only depend on constants are skipped.

use super::{AutodiffError, Tensor};

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bcast {
    Same,
    Row,
    Scalar,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId, Bcast),
    Sub(NodeId, NodeId, Bcast),
    Mul(NodeId, NodeId, Bcast),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    LeakyRelu(NodeId, f64),
    Exp(NodeId),
    Log(NodeId),
    Sqrt(NodeId),
    Clamp(NodeId, f64, f64),
    Minimum(NodeId, NodeId),
    Maximum(NodeId, NodeId),
    Sum(NodeId),
    Mean(NodeId),
    MeanRows(NodeId),
    SumCols(NodeId),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize, usize),
    BceWithLogits(NodeId, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A single-use computation tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    sizes: Vec<usize>,
}

impl Gradients {
    /// Adjoint of `id`, or `None` when the output does not depend on it.
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }

    /// Adjoint of `id`, zero-filled when the output does not depend on it.
    pub fn wrt(&self, id: NodeId) -> Vec<f64> {
        self.get(id)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; self.sizes[id.0]])
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

/// `max(l, 0) - l t + ln(1 + exp(-|l|))`, the stable form of binary cross entropy.
pub(crate) fn bce_logit_term(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p()
}

/// C (m x n) = A (m x k) * B (k x n), with arbitrary strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    // SAFETY: slice lengths cover every (row, col) addressed by the given
    // dimensions and strides; callers pass dense row-major buffers or their
    // transposed views.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Dense row-major matrix product used by forward-only paths.
pub fn matmul_values(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    assert_eq!(k, b.rows(), "matmul inner dimension");
    let mut out = vec![0.0; m * n];
    gemm(
        m,
        k,
        n,
        a.values(),
        k as isize,
        1,
        b.values(),
        n as isize,
        1,
        0.0,
        &mut out,
    );
    Tensor::matrix(m, n, out)
}

fn add_into(acc: &mut Option<Vec<f64>>, delta: &[f64]) {
    match acc {
        Some(v) => v.iter_mut().zip(delta).for_each(|(a, d)| *a += d),
        None => *acc = Some(delta.to_vec()),
    }
}

fn add_into_with<F: Fn(usize) -> f64>(acc: &mut Option<Vec<f64>>, len: usize, f: F) {
    let v = acc.get_or_insert_with(|| vec![0.0; len]);
    for (i, a) in v.iter_mut().enumerate() {
        *a += f(i);
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Leaf whose gradient flag follows `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        let needs = t.requires_grad();
        self.push(t, Op::Leaf, needs)
    }

    /// Constant leaf: never receives a gradient.
    pub fn constant(&mut self, mut t: Tensor) -> NodeId {
        t.set_requires_grad(false);
        self.push(t, Op::Leaf, false)
    }

    /// Trainable leaf: always receives a gradient.
    pub fn param(&mut self, t: &Tensor) -> NodeId {
        let mut v = Tensor::new(t.shape().to_vec(), t.values().to_vec()).expect("tensor invariant already checked");
        v.set_requires_grad(true);
        self.push(v, Op::Leaf, true)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn bcast(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<Bcast, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.same_shape(tb) {
            Ok(Bcast::Same)
        } else if tb.rows() == 1 && tb.cols() == ta.cols() {
            Ok(Bcast::Row)
        } else if tb.numel() == 1 {
            Ok(Bcast::Scalar)
        } else {
            Err(AutodiffError::ShapeMismatch {
                op,
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            })
        }
    }

    fn binary<F: Fn(f64, f64) -> f64>(&self, a: NodeId, b: NodeId, kind: Bcast, f: F) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let c = ta.cols();
        let bv = tb.values();
        let values = ta
            .values()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = match kind {
                    Bcast::Same => bv[i],
                    Bcast::Row => bv[i % c],
                    Bcast::Scalar => bv[0],
                };
                f(x, y)
            })
            .collect();
        Tensor::new(ta.shape().to_vec(), values).expect("shape preserved")
    }

    fn unary<F: Fn(f64) -> f64>(&mut self, a: NodeId, op: Op, f: F) -> NodeId {
        let ta = self.value(a);
        let values = ta.values().iter().map(|&x| f(x)).collect();
        let t = Tensor::new(ta.shape().to_vec(), values).expect("shape preserved");
        let needs = self.ng(a);
        self.push(t, op, needs)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let out = matmul_values(ta, tb);
        let needs = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), needs))
    }

    /// `a + b`, where `b` may be a row vector or a scalar broadcast over `a`.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let kind = self.bcast("add", a, b)?;
        let t = self.binary(a, b, kind, |x, y| x + y);
        let needs = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Add(a, b, kind), needs))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let kind = self.bcast("sub", a, b)?;
        let t = self.binary(a, b, kind, |x, y| x - y);
        let needs = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Sub(a, b, kind), needs))
    }

    /// Elementwise product with the same broadcasting rule as [`Graph::add`].
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let kind = self.bcast("mul", a, b)?;
        let t = self.binary(a, b, kind, |x, y| x * y);
        let needs = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Mul(a, b, kind), needs))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.scale(a, -1.0)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        self.unary(a, Op::LeakyRelu(a, slope), |x| if x > 0.0 { x } else { slope * x })
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.leaky_relu(a, 0.0)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Sqrt(a), f64::sqrt)
    }

    /// Clamp to `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    /// Elementwise minimum of two same-shape nodes; ties route to `a`.
    pub fn minimum(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.require_same("minimum", a, b)?;
        let t = self.binary(a, b, Bcast::Same, f64::min);
        let needs = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Minimum(a, b), needs))
    }

    /// Elementwise maximum of two same-shape nodes; ties route to `a`.
    pub fn maximum(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.require_same("maximum", a, b)?;
        let t = self.binary(a, b, Bcast::Same, f64::max);
        let needs = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Maximum(a, b), needs))
    }

    fn require_same(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<(), AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.same_shape(tb) {
            Ok(())
        } else {
            Err(AutodiffError::ShapeMismatch {
                op,
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            })
        }
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).values().iter().sum();
        let needs = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum(a), needs)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let m = t.values().iter().sum::<f64>() / t.numel() as f64;
        let needs = self.ng(a);
        self.push(Tensor::scalar(m), Op::Mean(a), needs)
    }

    /// Column means: `(r, c) -> (1, c)`.
    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let (r, c) = (t.rows(), t.cols());
        let mut out = vec![0.0; c];
        for i in 0..r {
            out.iter_mut().zip(t.row(i)).for_each(|(o, v)| *o += v);
        }
        out.iter_mut().for_each(|o| *o /= r as f64);
        let needs = self.ng(a);
        self.push(Tensor::matrix(1, c, out), Op::MeanRows(a), needs)
    }

    /// Row sums: `(r, c) -> (r, 1)`.
    pub fn sum_cols(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let r = t.rows();
        let out = (0..r).map(|i| t.row(i).iter().sum()).collect();
        let needs = self.ng(a);
        self.push(Tensor::matrix(r, 1, out), Op::SumCols(a), needs)
    }

    /// Horizontal concatenation of nodes with equal row counts.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, AutodiffError> {
        let rows = self.value(parts[0]).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: self.value(p).shape().to_vec(),
                });
            }
        }
        let refs: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let t = Tensor::hcat(&refs);
        let needs = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(t, Op::ConcatCols(parts.to_vec()), needs))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId, AutodiffError> {
        let t = self.value(a);
        if start >= end || end > t.cols() {
            return Err(AutodiffError::ShapeMismatch {
                op: "slice_cols",
                lhs: t.shape().to_vec(),
                rhs: vec![start, end],
            });
        }
        let mut values = Vec::with_capacity(t.rows() * (end - start));
        for i in 0..t.rows() {
            values.extend_from_slice(&t.row(i)[start..end]);
        }
        let out = Tensor::matrix(t.rows(), end - start, values);
        let needs = self.ng(a);
        Ok(self.push(out, Op::SliceCols(a, start, end), needs))
    }

    /// Mean binary cross entropy between `sigmoid(logits)` and `targets`.
    pub fn bce_with_logits(&mut self, logits: NodeId, targets: &[f64]) -> Result<NodeId, AutodiffError> {
        let t = self.value(logits);
        if t.numel() == 0 {
            return Err(AutodiffError::EmptyInput("bce_with_logits"));
        }
        if t.numel() != targets.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "bce_with_logits",
                lhs: t.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        if let Some(&bad) = targets.iter().find(|&&y| !(0.0..=1.0).contains(&y)) {
            return Err(AutodiffError::TargetOutOfRange(bad));
        }
        let loss = t
            .values()
            .iter()
            .zip(targets)
            .map(|(&l, &y)| bce_logit_term(l, y))
            .sum::<f64>()
            / targets.len() as f64;
        let needs = self.ng(logits);
        Ok(self.push(Tensor::scalar(loss), Op::BceWithLogits(logits, targets.to_vec()), needs))
    }

    /// Mean squared error against a constant target of the same shape.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId, AutodiffError> {
        self.require_same("mse", pred, target)?;
        let d = self.sub(pred, target)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean(sq))
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, out: NodeId) -> Result<Gradients, AutodiffError> {
        let out_t = self.value(out);
        if out_t.numel() != 1 {
            return Err(AutodiffError::NonScalarOutput(out_t.shape().to_vec()));
        }
        let n = out.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(vec![1.0]);
        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let sizes = self.nodes.iter().map(|n| n.value.numel()).collect();
        Ok(Gradients { grads, sizes })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = node.value.values();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, nn) = (ta.rows(), ta.cols(), tb.cols());
                if self.ng(*a) {
                    // dA = dC * B^T
                    let mut da = vec![0.0; m * k];
                    gemm(m, nn, k, g, nn as isize, 1, tb.values(), 1, nn as isize, 0.0, &mut da);
                    add_into(&mut grads[a.0], &da);
                }
                if self.ng(*b) {
                    // dB = A^T * dC
                    let mut db = vec![0.0; k * nn];
                    gemm(k, m, nn, ta.values(), 1, k as isize, g, nn as isize, 1, 0.0, &mut db);
                    add_into(&mut grads[b.0], &db);
                }
            }
            Op::Add(a, b, kind) | Op::Sub(a, b, kind) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.ng(*a) {
                    add_into(&mut grads[a.0], g);
                }
                if self.ng(*b) {
                    let red = self.reduce_bcast(g, *a, *b, *kind, |_| 1.0);
                    add_into_with(&mut grads[b.0], red.len(), |j| sign * red[j]);
                }
            }
            Op::Mul(a, b, kind) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let c = ta.cols();
                if self.ng(*a) {
                    let bv = tb.values();
                    add_into_with(&mut grads[a.0], g.len(), |j| {
                        let yb = match kind {
                            Bcast::Same => bv[j],
                            Bcast::Row => bv[j % c],
                            Bcast::Scalar => bv[0],
                        };
                        g[j] * yb
                    });
                }
                if self.ng(*b) {
                    let av = ta.values();
                    let red = self.reduce_bcast(g, *a, *b, *kind, |j| av[j]);
                    add_into(&mut grads[b.0], &red);
                }
            }
            Op::Scale(a, c) => add_into_with(&mut grads[a.0], g.len(), |j| c * g[j]),
            Op::AddScalar(a) => add_into(&mut grads[a.0], g),
            Op::Tanh(a) => add_into_with(&mut grads[a.0], g.len(), |j| g[j] * (1.0 - y[j] * y[j])),
            Op::Sigmoid(a) => add_into_with(&mut grads[a.0], g.len(), |j| g[j] * y[j] * (1.0 - y[j])),
            Op::LeakyRelu(a, s) => {
                let x = self.value(*a).values();
                add_into_with(&mut grads[a.0], g.len(), |j| if x[j] > 0.0 { g[j] } else { s * g[j] });
            }
            Op::Exp(a) => add_into_with(&mut grads[a.0], g.len(), |j| g[j] * y[j]),
            Op::Log(a) => {
                let x = self.value(*a).values();
                add_into_with(&mut grads[a.0], g.len(), |j| g[j] / x[j]);
            }
            Op::Sqrt(a) => add_into_with(&mut grads[a.0], g.len(), |j| g[j] * 0.5 / y[j]),
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a).values();
                add_into_with(&mut grads[a.0], g.len(), |j| {
                    if x[j] >= *lo && x[j] <= *hi {
                        g[j]
                    } else {
                        0.0
                    }
                });
            }
            Op::Minimum(a, b) | Op::Maximum(a, b) => {
                let is_min = matches!(node.op, Op::Minimum(..));
                let (xa, xb) = (self.value(*a).values(), self.value(*b).values());
                let pick_a = |j: usize| if is_min { xa[j] <= xb[j] } else { xa[j] >= xb[j] };
                if self.ng(*a) {
                    add_into_with(&mut grads[a.0], g.len(), |j| if pick_a(j) { g[j] } else { 0.0 });
                }
                if self.ng(*b) {
                    add_into_with(&mut grads[b.0], g.len(), |j| if pick_a(j) { 0.0 } else { g[j] });
                }
            }
            Op::Sum(a) => {
                let len = self.value(*a).numel();
                add_into_with(&mut grads[a.0], len, |_| g[0]);
            }
            Op::Mean(a) => {
                let len = self.value(*a).numel();
                add_into_with(&mut grads[a.0], len, |_| g[0] / len as f64);
            }
            Op::MeanRows(a) => {
                let t = self.value(*a);
                let (r, c) = (t.rows(), t.cols());
                add_into_with(&mut grads[a.0], r * c, |j| g[j % c] / r as f64);
            }
            Op::SumCols(a) => {
                let t = self.value(*a);
                let c = t.cols();
                add_into_with(&mut grads[a.0], t.numel(), |j| g[j / c]);
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for p in parts {
                    let pc = self.value(*p).cols();
                    if self.ng(*p) {
                        let len = self.value(*p).numel();
                        add_into_with(&mut grads[p.0], len, |j| {
                            let (r, c) = (j / pc, j % pc);
                            g[r * total + offset + c]
                        });
                    }
                    offset += pc;
                }
            }
            Op::SliceCols(a, start, end) => {
                let t = self.value(*a);
                let (c, w) = (t.cols(), end - start);
                add_into_with(&mut grads[a.0], t.numel(), |j| {
                    let (r, col) = (j / c, j % c);
                    if col >= *start && col < *end {
                        g[r * w + col - start]
                    } else {
                        0.0
                    }
                });
            }
            Op::BceWithLogits(a, targets) => {
                let x = self.value(*a).values();
                let n = targets.len() as f64;
                add_into_with(&mut grads[a.0], x.len(), |j| g[0] * (sigmoid(x[j]) - targets[j]) / n);
            }
        }
    }

    /// Reduces `g * w(j)` to the shape of the broadcast operand `b`.
    fn reduce_bcast<W: Fn(usize) -> f64>(&self, g: &[f64], a: NodeId, b: NodeId, kind: Bcast, w: W) -> Vec<f64> {
        match kind {
            Bcast::Same => g.iter().enumerate().map(|(j, gj)| gj * w(j)).collect(),
            Bcast::Row => {
                let c = self.value(a).cols();
                let mut out = vec![0.0; self.value(b).numel()];
                for (j, gj) in g.iter().enumerate() {
                    out[j % c] += gj * w(j);
                }
                out
            }
            Bcast::Scalar => vec![g.iter().enumerate().map(|(j, gj)| gj * w(j)).sum()],
        }
    }
}

/// Evaluates `f` on fresh leaves built from `inputs` and differentiates its
/// scalar output with respect to every input.
///
/// Inputs whose `requires_grad` flag is off receive a zero gradient.
pub fn evaluate_and_grad<F>(inputs: &[Tensor], f: F) -> Result<(Tensor, Vec<Vec<f64>>), AutodiffError>
where
    F: FnOnce(&mut Graph, &[NodeId]) -> Result<NodeId, AutodiffError>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &ids)?;
    let grads = g.backward(out)?;
    let per_input = ids.iter().map(|&id| grads.wrt(id)).collect();
    Ok((g.value(out).clone(), per_input))
}

/// Forward-only elementwise sigmoid.
pub fn sigmoid_value(x: f64) -> f64 {
    sigmoid(x)
}
