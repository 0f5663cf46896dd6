//! Tape-based reverse-mode automatic differentiation.
//!
//! Every primitive application appends one node to a [`Tape`]. A node stores
//! its output value and the handles of its inputs, so `backward` can replay
//! the tape in reverse order and apply each primitive's vector-Jacobian
//! product. Nodes that do not depend on any `requires_grad` leaf are skipped
//! during the reverse sweep.
//!
//! ```
//! use seqssl::numerics::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::row(vec![3.0]), true);
//! let sq = tape.mul(x, x);
//! let loss = tape.sum(sq);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
//! ```

use std::collections::HashMap;
use std::sync::Arc;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The primitive operations the tape knows how to differentiate.
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    /// `[m, k] x [k, n] -> [m, n]`.
    Matmul,
    /// Elementwise sum of equal shapes, or bias-add of a `[1, n]` / `[n]`
    /// tensor along the last dimension of the first input.
    Add,
    /// Elementwise product of equal shapes.
    Mul,
    Tanh,
    Logistic,
    /// Softmax over the last dimension.
    Softmax,
    /// Log-softmax over the last dimension.
    LogSoftmax,
    Log,
    Concat { axis: usize },
    Slice { axis: usize, start: usize, len: usize },
    Reshape { shape: Vec<usize> },
    /// Row gather from a `[vocab, dim]` table.
    Embedding { ids: Vec<usize> },
    /// Multiply by a pre-sampled binary keep-mask scaled by `1 / (1 - p)`.
    Dropout { mask: Vec<bool>, p: f64 },
    /// Sum of all entries, shape `[1]`.
    Sum,
    Scale(f64),
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Matmul => "matmul",
            Primitive::Add => "add",
            Primitive::Mul => "mul",
            Primitive::Tanh => "tanh",
            Primitive::Logistic => "logistic",
            Primitive::Softmax => "softmax",
            Primitive::LogSoftmax => "log_softmax",
            Primitive::Log => "log",
            Primitive::Concat { .. } => "concat",
            Primitive::Slice { .. } => "slice",
            Primitive::Reshape { .. } => "reshape",
            Primitive::Embedding { .. } => "embedding",
            Primitive::Dropout { .. } => "dropout",
            Primitive::Sum => "sum",
            Primitive::Scale(_) => "scale",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Primitive::Matmul | Primitive::Add | Primitive::Mul => Some(2),
            Primitive::Concat { .. } => None,
            _ => Some(1),
        }
    }
}

enum Op {
    Leaf,
    Apply(Primitive, Vec<Var>),
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of primitive applications.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every `requires_grad` leaf.
#[derive(Debug, Default)]
pub struct Gradients {
    grads: HashMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(&var)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.remove(&var)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

fn shape_err(p: &Primitive, shapes: Vec<Vec<usize>>) -> Error {
    Error::Shape {
        primitive: p.name(),
        shapes,
    }
}

/// Split `shape` around `axis` into (outer, axis length, inner).
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn softmax_rows(x: &[f64], cols: usize, out: &mut [f64]) {
    for (xr, or) in x.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let max = xr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (o, &v) in or.iter_mut().zip(xr) {
            *o = (v - max).exp();
            total += *o;
        }
        for o in or.iter_mut() {
            *o /= total;
        }
    }
}

fn log_softmax_rows(x: &[f64], cols: usize, out: &mut [f64]) {
    for (xr, or) in x.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let max = xr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + xr.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        for (o, &v) in or.iter_mut().zip(xr) {
            *o = v - lse;
        }
    }
}

fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `out[m, n] += a[m, k] * b[k, n]`.
fn matmul_into(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
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

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.leaf_shared(Arc::new(value), requires_grad)
    }

    /// Register an already shared tensor without copying its storage.
    pub fn leaf_shared(&mut self, value: Arc<Tensor>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shared_value(&self, var: Var) -> Arc<Tensor> {
        Arc::clone(&self.nodes[var.0].value)
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].needs_grad
    }

    fn push(&mut self, value: Arc<Tensor>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Apply a primitive, checking input shapes against its signature.
    pub fn apply(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var> {
        if let Some(n) = prim.arity() {
            if inputs.len() != n {
                return Err(shape_err(
                    &prim,
                    inputs.iter().map(|&v| self.shape(v).to_vec()).collect(),
                ));
            }
        } else if inputs.is_empty() {
            return Err(shape_err(&prim, vec![]));
        }
        let value = self.compute(&prim, inputs)?;
        let needs_grad = inputs.iter().any(|&v| self.nodes[v.0].needs_grad);
        Ok(self.push(Arc::new(value), Op::Apply(prim, inputs.to_vec()), needs_grad))
    }

    fn compute(&self, prim: &Primitive, inputs: &[Var]) -> Result<Tensor> {
        let x = self.value(inputs[0]);
        let shapes = || {
            inputs
                .iter()
                .map(|&v| self.shape(v).to_vec())
                .collect::<Vec<_>>()
        };
        let out = match prim {
            Primitive::Matmul => {
                let b = self.value(inputs[1]);
                let (xs, bs) = (x.shape(), b.shape());
                if xs.len() != 2 || bs.len() != 2 || xs[1] != bs[0] {
                    return Err(shape_err(prim, shapes()));
                }
                let (m, k, n) = (xs[0], xs[1], bs[1]);
                let mut out = vec![0.0; m * n];
                matmul_into(x.data(), b.data(), m, k, n, &mut out);
                Tensor::new(vec![m, n], out)?
            }
            Primitive::Add => {
                let b = self.value(inputs[1]);
                if x.shape() == b.shape() {
                    let data = x.data().iter().zip(b.data()).map(|(a, b)| a + b).collect();
                    Tensor::new(x.shape().to_vec(), data)?
                } else if is_bias(x.shape(), b.shape()) {
                    let n = b.len();
                    let mut data = x.data().to_vec();
                    for row in data.chunks_exact_mut(n) {
                        for (o, &bv) in row.iter_mut().zip(b.data()) {
                            *o += bv;
                        }
                    }
                    Tensor::new(x.shape().to_vec(), data)?
                } else {
                    return Err(shape_err(prim, shapes()));
                }
            }
            Primitive::Mul => {
                let b = self.value(inputs[1]);
                if x.shape() != b.shape() {
                    return Err(shape_err(prim, shapes()));
                }
                let data = x.data().iter().zip(b.data()).map(|(a, b)| a * b).collect();
                Tensor::new(x.shape().to_vec(), data)?
            }
            Primitive::Tanh => map(x, f64::tanh),
            Primitive::Logistic => map(x, logistic),
            Primitive::Log => map(x, f64::ln),
            Primitive::Scale(s) => map(x, |v| v * s),
            Primitive::Softmax => {
                let mut out = vec![0.0; x.len()];
                softmax_rows(x.data(), x.cols(), &mut out);
                Tensor::new(x.shape().to_vec(), out)?
            }
            Primitive::LogSoftmax => {
                let mut out = vec![0.0; x.len()];
                log_softmax_rows(x.data(), x.cols(), &mut out);
                Tensor::new(x.shape().to_vec(), out)?
            }
            Primitive::Sum => Tensor::scalar(x.data().iter().sum()),
            Primitive::Concat { axis } => {
                let axis = *axis;
                let rank = x.shape().len();
                if axis >= rank {
                    return Err(shape_err(prim, shapes()));
                }
                let mut total = 0;
                for &v in inputs {
                    let s = self.shape(v);
                    let compatible = s.len() == rank
                        && s.iter()
                            .zip(x.shape())
                            .enumerate()
                            .all(|(d, (a, b))| d == axis || a == b);
                    if !compatible {
                        return Err(shape_err(prim, shapes()));
                    }
                    total += s[axis];
                }
                let mut shape = x.shape().to_vec();
                shape[axis] = total;
                let (outer, _, inner) = split_axis(&shape, axis);
                let mut data = Vec::with_capacity(outer * total * inner);
                for o in 0..outer {
                    for &v in inputs {
                        let t = self.value(v);
                        let chunk = t.shape()[axis] * inner;
                        data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
                    }
                }
                Tensor::new(shape, data)?
            }
            Primitive::Slice { axis, start, len } => {
                let (axis, start, len) = (*axis, *start, *len);
                if axis >= x.shape().len() || len == 0 || start + len > x.shape()[axis] {
                    return Err(shape_err(prim, shapes()));
                }
                let (outer, dim, inner) = split_axis(x.shape(), axis);
                let mut data = Vec::with_capacity(outer * len * inner);
                for o in 0..outer {
                    let base = o * dim * inner + start * inner;
                    data.extend_from_slice(&x.data()[base..base + len * inner]);
                }
                let mut shape = x.shape().to_vec();
                shape[axis] = len;
                Tensor::new(shape, data)?
            }
            Primitive::Reshape { shape } => x
                .clone()
                .reshaped(shape.clone())
                .map_err(|_| shape_err(prim, vec![x.shape().to_vec(), shape.clone()]))?,
            Primitive::Embedding { ids } => {
                let s = x.shape();
                if s.len() != 2 || ids.is_empty() || ids.iter().any(|&i| i >= s[0]) {
                    return Err(shape_err(prim, vec![s.to_vec(), vec![ids.len()]]));
                }
                let dim = s[1];
                let mut data = Vec::with_capacity(ids.len() * dim);
                for &i in ids {
                    data.extend_from_slice(&x.data()[i * dim..(i + 1) * dim]);
                }
                Tensor::new(vec![ids.len(), dim], data)?
            }
            Primitive::Dropout { mask, p } => {
                if mask.len() != x.len() || !(0.0..1.0).contains(p) {
                    return Err(shape_err(prim, vec![x.shape().to_vec(), vec![mask.len()]]));
                }
                let keep = 1.0 / (1.0 - p);
                let data = x
                    .data()
                    .iter()
                    .zip(mask)
                    .map(|(&v, &m)| if m { v * keep } else { 0.0 })
                    .collect();
                Tensor::new(x.shape().to_vec(), data)?
            }
        };
        Ok(out)
    }

    fn must(&mut self, prim: Primitive, inputs: &[Var]) -> Var {
        match self.apply(prim, inputs) {
            Ok(v) => v,
            Err(e) => panic!("{e}"),
        }
    }

    // Convenience wrappers. These panic on shape errors, which always
    // indicate a bug in graph construction; use `apply` for checked calls.

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.must(Primitive::Matmul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.must(Primitive::Add, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.must(Primitive::Mul, &[a, b])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.must(Primitive::Tanh, &[a])
    }

    pub fn logistic(&mut self, a: Var) -> Var {
        self.must(Primitive::Logistic, &[a])
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        self.must(Primitive::Softmax, &[a])
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        self.must(Primitive::LogSoftmax, &[a])
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.must(Primitive::Log, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.must(Primitive::Sum, &[a])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.must(Primitive::Scale(s), &[a])
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Var {
        if inputs.len() == 1 {
            return inputs[0];
        }
        self.must(Primitive::Concat { axis }, inputs)
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Var {
        self.must(Primitive::Slice { axis, start, len }, &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        self.must(Primitive::Reshape { shape }, &[a])
    }

    pub fn embedding(&mut self, table: Var, ids: Vec<usize>) -> Var {
        self.must(Primitive::Embedding { ids }, &[table])
    }

    pub fn dropout(&mut self, a: Var, mask: Vec<bool>, p: f64) -> Var {
        self.must(Primitive::Dropout { mask, p }, &[a])
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Returns a gradient for every leaf created with `requires_grad`,
    /// including zero gradients for leaves the loss does not depend on.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Op::Apply(prim, inputs) = &node.op else {
                continue;
            };
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop(prim, inputs, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let mut out = Gradients::default();
        for (idx, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if matches!(node.op, Op::Leaf) && node.needs_grad {
                let g = grads[idx]
                    .take()
                    .unwrap_or_else(|| vec![0.0; node.value.len()]);
                out.grads.insert(
                    Var(idx),
                    Tensor::new(node.value.shape().to_vec(), g).expect("gradient matches leaf shape"),
                );
            }
        }
        // Leaves created after the loss cannot influence it.
        for (idx, node) in self.nodes.iter().enumerate().skip(loss.0 + 1) {
            if matches!(node.op, Op::Leaf) && node.needs_grad {
                out.grads
                    .insert(Var(idx), Tensor::zeros(node.value.shape()));
            }
        }
        Ok(out)
    }

    fn backprop(
        &self,
        prim: &Primitive,
        inputs: &[Var],
        out: &Tensor,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(slot);
        };
        let x = self.value(inputs[0]);
        match prim {
            Primitive::Matmul => {
                let b = self.value(inputs[1]);
                let (m, k, n) = (x.shape()[0], x.shape()[1], b.shape()[1]);
                if wants(inputs[0]) {
                    acc(inputs[0], &mut |ga| {
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let brow = &b.data()[p * n..(p + 1) * n];
                                let dot: f64 = grow.iter().zip(brow).map(|(a, b)| a * b).sum();
                                ga[i * k + p] += dot;
                            }
                        }
                    });
                }
                if wants(inputs[1]) {
                    acc(inputs[1], &mut |gb| {
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let av = x.data()[i * k + p];
                                let gbrow = &mut gb[p * n..(p + 1) * n];
                                for (o, &gv) in gbrow.iter_mut().zip(grow) {
                                    *o += av * gv;
                                }
                            }
                        }
                    });
                }
            }
            Primitive::Add => {
                acc(inputs[0], &mut |ga| add_assign(ga, g));
                let b = self.value(inputs[1]);
                if b.shape() == x.shape() {
                    acc(inputs[1], &mut |gb| add_assign(gb, g));
                } else {
                    let n = b.len();
                    acc(inputs[1], &mut |gb| {
                        for row in g.chunks_exact(n) {
                            add_assign(gb, row);
                        }
                    });
                }
            }
            Primitive::Mul => {
                let b = self.value(inputs[1]);
                acc(inputs[0], &mut |ga| {
                    for ((o, &gv), &bv) in ga.iter_mut().zip(g).zip(b.data()) {
                        *o += gv * bv;
                    }
                });
                acc(inputs[1], &mut |gb| {
                    for ((o, &gv), &av) in gb.iter_mut().zip(g).zip(x.data()) {
                        *o += gv * av;
                    }
                });
            }
            Primitive::Tanh => acc(inputs[0], &mut |ga| {
                for ((o, &gv), &y) in ga.iter_mut().zip(g).zip(out.data()) {
                    *o += gv * (1.0 - y * y);
                }
            }),
            Primitive::Logistic => acc(inputs[0], &mut |ga| {
                for ((o, &gv), &y) in ga.iter_mut().zip(g).zip(out.data()) {
                    *o += gv * y * (1.0 - y);
                }
            }),
            Primitive::Log => acc(inputs[0], &mut |ga| {
                for ((o, &gv), &xv) in ga.iter_mut().zip(g).zip(x.data()) {
                    *o += gv / xv;
                }
            }),
            Primitive::Scale(s) => acc(inputs[0], &mut |ga| {
                for (o, &gv) in ga.iter_mut().zip(g) {
                    *o += gv * s;
                }
            }),
            Primitive::Softmax => {
                let cols = out.cols();
                acc(inputs[0], &mut |ga| {
                    for ((gr, yr), or) in g
                        .chunks_exact(cols)
                        .zip(out.data().chunks_exact(cols))
                        .zip(ga.chunks_exact_mut(cols))
                    {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((o, &gv), &y) in or.iter_mut().zip(gr).zip(yr) {
                            *o += y * (gv - dot);
                        }
                    }
                });
            }
            Primitive::LogSoftmax => {
                let cols = out.cols();
                acc(inputs[0], &mut |ga| {
                    for ((gr, yr), or) in g
                        .chunks_exact(cols)
                        .zip(out.data().chunks_exact(cols))
                        .zip(ga.chunks_exact_mut(cols))
                    {
                        let total: f64 = gr.iter().sum();
                        for ((o, &gv), &ly) in or.iter_mut().zip(gr).zip(yr) {
                            *o += gv - ly.exp() * total;
                        }
                    }
                });
            }
            Primitive::Sum => acc(inputs[0], &mut |ga| {
                for o in ga.iter_mut() {
                    *o += g[0];
                }
            }),
            Primitive::Concat { axis } => {
                let (outer, total, inner) = split_axis(out.shape(), *axis);
                let mut offset = 0;
                for &v in inputs {
                    let d = self.shape(v)[*axis];
                    let chunk = d * inner;
                    acc(v, &mut |gv| {
                        for o in 0..outer {
                            let src = o * total * inner + offset * inner;
                            add_assign(&mut gv[o * chunk..(o + 1) * chunk], &g[src..src + chunk]);
                        }
                    });
                    offset += d;
                }
            }
            Primitive::Slice { axis, start, len } => {
                let (outer, dim, inner) = split_axis(x.shape(), *axis);
                acc(inputs[0], &mut |ga| {
                    for o in 0..outer {
                        let dst = o * dim * inner + start * inner;
                        let src = o * len * inner;
                        add_assign(&mut ga[dst..dst + len * inner], &g[src..src + len * inner]);
                    }
                });
            }
            Primitive::Reshape { .. } => acc(inputs[0], &mut |ga| add_assign(ga, g)),
            Primitive::Embedding { ids } => {
                let dim = x.shape()[1];
                acc(inputs[0], &mut |ga| {
                    for (r, &i) in ids.iter().enumerate() {
                        add_assign(&mut ga[i * dim..(i + 1) * dim], &g[r * dim..(r + 1) * dim]);
                    }
                });
            }
            Primitive::Dropout { mask, p } => {
                let keep = 1.0 / (1.0 - p);
                acc(inputs[0], &mut |ga| {
                    for ((o, &gv), &m) in ga.iter_mut().zip(g).zip(mask) {
                        if m {
                            *o += gv * keep;
                        }
                    }
                });
            }
        }
    }
}

fn is_bias(x: &[usize], b: &[usize]) -> bool {
    let n = *x.last().unwrap_or(&0);
    match b {
        [len] => *len == n,
        [1, len] => *len == n && x.len() >= 2,
        _ => false,
    }
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = x.data().iter().map(|&v| f(v)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

fn add_assign(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
