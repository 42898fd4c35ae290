//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] borrows a [`ParamStore`] immutably while the forward pass is
//! recorded; [`Graph::backward`] returns a [`Gradients`] set that the caller
//! folds back into the store with [`ParamStore::accumulate`]. Nodes are
//! appended in creation order, so reverse index order is a valid reverse
//! topological order.

use std::collections::HashMap;

use crate::error::{shape_err, NnError, Result};
use crate::float::Float;
use crate::kernels::{self, ConvGeom};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Owner of every learnable tensor of a model.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    tensors: Vec<Tensor<T>>,
    names: Vec<String>,
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            tensors: Vec::new(),
            names: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        self.tensors.push(tensor.with_requires_grad(true));
        self.names.push(name.into());
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::clear_grad);
    }

    pub fn accumulate(&mut self, grads: &Gradients<T>) -> Result<()> {
        for (i, g) in grads.params.iter().enumerate() {
            if let Some(g) = g {
                self.tensors[i].accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    pub fn cast<U: Float>(&self) -> ParamStore<U> {
        ParamStore {
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            names: self.names.clone(),
        }
    }
}

/// Gradients produced by one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    params: Vec<Option<Vec<T>>>,
    nodes: HashMap<NodeId, Vec<T>>,
}

impl<T: Float> Gradients<T> {
    pub fn param(&self, id: ParamId) -> Option<&[T]> {
        self.params.get(id.0).and_then(|g| g.as_deref())
    }

    /// Gradient with respect to an input node created with `requires_grad`.
    pub fn node(&self, id: NodeId) -> Option<&[T]> {
        self.nodes.get(&id).map(Vec::as_slice)
    }

    pub fn squared_norm(&self) -> f64 {
        self.params
            .iter()
            .flatten()
            .flat_map(|g| g.iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum()
    }

    /// Multiplies every parameter gradient by `factor` (used for norm clipping).
    pub fn scale(&mut self, factor: f64) {
        let f = T::from_f64(factor);
        for g in self.params.iter_mut().flatten() {
            g.iter_mut().for_each(|v| *v *= f);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Value<T> {
    Owned(Vec<T>),
    Param(ParamId),
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Linear {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    Conv {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        geom: ConvGeom,
        batch: usize,
        col: Vec<T>,
    },
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Dropout {
        x: NodeId,
        mask: Vec<T>,
    },
    AvgPool1d {
        x: NodeId,
        k: usize,
    },
    GlobalAvgPool(NodeId),
    Reshape(NodeId),
    Concat(Vec<NodeId>),
    Add(NodeId, NodeId),
    ChannelScale {
        x: NodeId,
        s: NodeId,
    },
    Scale(NodeId, T),
    Sum(NodeId),
    Mse {
        pred: NodeId,
        target: Vec<T>,
        weight: T,
    },
    L1 {
        pred: NodeId,
        target: Vec<T>,
        weight: T,
    },
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        weight: T,
        probs: Vec<T>,
    },
    AddScalars(Vec<NodeId>),
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Linear { .. } => "linear",
            Op::Conv { .. } => "conv",
            Op::Relu(_) => "relu",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Dropout { .. } => "dropout",
            Op::AvgPool1d { .. } => "avg_pool1d",
            Op::GlobalAvgPool(_) => "global_avg_pool",
            Op::Reshape(_) => "reshape",
            Op::Concat(_) => "concat",
            Op::Add(..) => "add",
            Op::ChannelScale { .. } => "channel_scale",
            Op::Scale(..) => "scale",
            Op::Sum(_) => "sum",
            Op::Mse { .. } => "mse",
            Op::L1 { .. } => "l1",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::AddScalars(_) => "add_scalars",
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    shape: Vec<usize>,
    value: Value<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recorded computation over a borrowed parameter store.
pub struct Graph<'p, T> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_nodes: HashMap<ParamId, NodeId>,
    consumed: bool,
}

impl<'p, T: Float> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            consumed: false,
        }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn value(&self, id: NodeId) -> &[T] {
        match &self.nodes[id.0].value {
            Value::Owned(v) => v,
            Value::Param(p) => self.params.get(*p).data(),
        }
    }

    pub fn tensor(&self, id: NodeId) -> Tensor<T> {
        Tensor::new(self.shape(id).to_vec(), self.value(id).to_vec())
            .expect("node shapes are validated on creation")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<T>, op: Op<T>, parents: &[NodeId]) -> Result<NodeId> {
        let id = self.nodes.len();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite {
                op: op.name(),
                node: id,
            });
        }
        let requires_grad = parents.iter().any(|&p| self.requires_grad(p));
        self.nodes.push(Node {
            shape,
            value: Value::Owned(data),
            op,
            requires_grad,
        });
        Ok(NodeId(id))
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, t: Tensor<T>) -> NodeId {
        let requires_grad = t.requires_grad();
        let shape = t.shape().to_vec();
        self.nodes.push(Node {
            shape,
            value: Value::Owned(t.into_data()),
            op: Op::Leaf,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Node that reads a parameter without copying it. Repeated calls for the
    /// same parameter return the same node so gradients accumulate once.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        let shape = self.params.get(id).shape().to_vec();
        self.nodes.push(Node {
            shape,
            value: Value::Param(id),
            op: Op::Leaf,
            requires_grad: true,
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes.insert(id, n);
        n
    }

    /// `y = x W^T + b` with `x: [B, in]`, `W: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return shape_err(
                "linear",
                format!("input {xs:?} incompatible with weight {ws:?} (expected [B, {}])", ws.get(1).copied().unwrap_or(0)),
            );
        }
        let (batch, inp, out) = (xs[0], xs[1], ws[0]);
        if let Some(b) = b {
            if self.shape(b) != [out] {
                return shape_err("linear", format!("bias {:?} for {out} outputs", self.shape(b)));
            }
        }
        let mut y = vec![T::zero(); batch * out];
        T::gemm(
            batch,
            inp,
            out,
            T::one(),
            self.value(x),
            inp as isize,
            1,
            self.value(w),
            1,
            inp as isize,
            T::zero(),
            &mut y,
            out as isize,
            1,
        );
        if let Some(b) = b {
            let bv = self.value(b);
            for row in y.chunks_exact_mut(out) {
                row.iter_mut().zip(bv).for_each(|(a, &c)| *a += c);
            }
        }
        let mut parents = vec![x, w];
        parents.extend(b);
        self.push(vec![batch, out], y, Op::Linear { x, w, b }, &parents)
    }

    /// 2-D convolution over `x: [B, C, H, W]` with `w: [O, C/groups, kh, kw]`.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>, geom: ConvGeom) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || xs[1] != geom.c_in || xs[2] != geom.h || xs[3] != geom.w {
            return shape_err(
                "conv2d",
                format!(
                    "input {xs:?} does not match [B, {}, {}, {}]",
                    geom.c_in, geom.h, geom.w
                ),
            );
        }
        let expect_w = [geom.c_out, geom.c_in / geom.groups, geom.kh, geom.kw];
        if self.shape(w) != expect_w {
            return shape_err("conv2d", format!("weight {:?}, expected {expect_w:?}", self.shape(w)));
        }
        if let Some(b) = b {
            if self.shape(b) != [geom.c_out] {
                return shape_err("conv2d", format!("bias {:?}", self.shape(b)));
            }
        }
        let batch = xs[0];
        let col = kernels::im2col(self.value(x), batch, &geom);
        let bias = b.map(|b| self.value(b));
        let y = kernels::conv_forward(&col, self.value(w), bias, batch, &geom);
        let mut parents = vec![x, w];
        parents.extend(b);
        self.push(
            vec![batch, geom.c_out, geom.ho, geom.wo],
            y,
            Op::Conv {
                x,
                w,
                b,
                geom,
                batch,
                col,
            },
            &parents,
        )
    }

    /// 1-D convolution over `x: [B, C, L]`, expressed as a height-1 2-D convolution.
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>, geom: ConvGeom) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || geom.h != 1 {
            return shape_err("conv1d", format!("input {xs:?} is not [B, C, L]"));
        }
        let ws = self.shape(w).to_vec();
        let x4 = self.reshape(x, vec![xs[0], xs[1], 1, xs[2]])?;
        let w4 = if ws.len() == 3 {
            self.reshape(w, vec![ws[0], ws[1], 1, ws[2]])?
        } else {
            w
        };
        let y = self.conv2d(x4, w4, b, geom)?;
        self.reshape(y, vec![xs[0], geom.c_out, geom.wo])
    }

    fn unary(&mut self, x: NodeId, f: impl Fn(T) -> T, op: Op<T>) -> Result<NodeId> {
        let data = self.value(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, data, op, &[x])
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, |v| if v > T::zero() { v } else { T::zero() }, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, |v| v.tanh(), Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, |v| T::one() / (T::one() + (-v).exp()), Op::Sigmoid(x))
    }

    pub fn scale(&mut self, x: NodeId, c: T) -> Result<NodeId> {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    /// Inverted dropout. Identity (same node) in eval mode or when `p == 0`.
    pub fn dropout<R: rand::Rng + ?Sized>(&mut self, x: NodeId, p: f64, mode: Mode, rng: &mut R) -> Result<NodeId> {
        if !(0.0..1.0).contains(&p) {
            return Err(NnError::Config(format!("dropout rate {p} outside [0, 1)")));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let keep = T::from_f64(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
            .collect();
        let data = self.value(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, data, Op::Dropout { x, mask }, &[x])
    }

    /// Non-overlapping average pooling along the last axis of `[B, C, L]`.
    pub fn avg_pool1d(&mut self, x: NodeId, k: usize) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || k == 0 || xs[2] % k != 0 {
            return shape_err("avg_pool1d", format!("cannot pool {xs:?} by {k}"));
        }
        let lo = xs[2] / k;
        let inv = T::from_f64(1.0 / k as f64);
        let data = self
            .value(x)
            .chunks_exact(k)
            .map(|c| c.iter().copied().sum::<T>() * inv)
            .collect();
        self.push(vec![xs[0], xs[1], lo], data, Op::AvgPool1d { x, k }, &[x])
    }

    /// Mean over every axis after the channel axis: `[B, C, ...] -> [B, C]`.
    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 3 {
            return shape_err("global_avg_pool", format!("need [B, C, ...], got {xs:?}"));
        }
        let inner: usize = xs[2..].iter().product();
        let inv = T::from_f64(1.0 / inner as f64);
        let data = self
            .value(x)
            .chunks_exact(inner)
            .map(|c| c.iter().copied().sum::<T>() * inv)
            .collect();
        self.push(vec![xs[0], xs[1]], data, Op::GlobalAvgPool(x), &[x])
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let n: usize = shape.iter().product();
        if n != self.value(x).len() {
            return shape_err("reshape", format!("cannot view {:?} as {shape:?}", self.shape(x)));
        }
        let data = self.value(x).to_vec();
        self.push(shape, data, Op::Reshape(x), &[x])
    }

    /// `[B, ...] -> [B, prod(...)]`.
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let rest: usize = xs[1..].iter().product();
        self.reshape(x, vec![xs[0], rest])
    }

    /// Concatenation along axis 1 of tensors `[B, C_i, rest...]` sharing `B` and `rest`.
    pub fn concat(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = xs.first() else {
            return shape_err("concat", "no inputs");
        };
        let s0 = self.shape(first).to_vec();
        if s0.len() < 2 {
            return shape_err("concat", format!("need rank >= 2, got {s0:?}"));
        }
        let mut channels = 0;
        for &x in xs {
            let s = self.shape(x);
            if s.len() != s0.len() || s[0] != s0[0] || s[2..] != s0[2..] {
                return shape_err("concat", format!("{s:?} incompatible with {s0:?}"));
            }
            channels += s[1];
        }
        let batch = s0[0];
        let mut data = Vec::with_capacity(xs.iter().map(|&x| self.value(x).len()).sum());
        for b in 0..batch {
            for &x in xs {
                let per = self.value(x).len() / batch;
                data.extend_from_slice(&self.value(x)[b * per..(b + 1) * per]);
            }
        }
        let mut shape = s0.clone();
        shape[1] = channels;
        self.push(shape, data, Op::Concat(xs.to_vec()), xs)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return shape_err("add", format!("{:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        let data = self.value(a).iter().zip(self.value(b)).map(|(&u, &v)| u + v).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, data, Op::Add(a, b), &[a, b])
    }

    /// `x[b, c, ...] * s[b, c]`.
    pub fn channel_scale(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let ss = self.shape(s).to_vec();
        if xs.len() < 2 || ss != xs[..2] {
            return shape_err("channel_scale", format!("gate {ss:?} for input {xs:?}"));
        }
        let inner = self.value(x).len() / (xs[0] * xs[1]);
        let sv = self.value(s);
        let data = self
            .value(x)
            .chunks_exact(inner)
            .zip(sv)
            .flat_map(|(c, &g)| c.iter().map(move |&v| v * g))
            .collect();
        self.push(xs, data, Op::ChannelScale { x, s }, &[x, s])
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).iter().copied().sum();
        self.push(vec![1], vec![s], Op::Sum(x), &[x])
    }

    /// `weight * mean((pred - target)^2)` over every element.
    pub fn mse(&mut self, pred: NodeId, target: Vec<T>, weight: T) -> Result<NodeId> {
        if target.len() != self.value(pred).len() {
            return shape_err("mse", format!("{} targets for {:?}", target.len(), self.shape(pred)));
        }
        let n = T::from_f64(target.len() as f64);
        let s: T = self
            .value(pred)
            .iter()
            .zip(&target)
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum();
        self.push(vec![1], vec![weight * s / n], Op::Mse { pred, target, weight }, &[pred])
    }

    /// `weight * mean(|pred - target|)` over every element.
    pub fn l1(&mut self, pred: NodeId, target: Vec<T>, weight: T) -> Result<NodeId> {
        if target.len() != self.value(pred).len() {
            return shape_err("l1", format!("{} targets for {:?}", target.len(), self.shape(pred)));
        }
        let n = T::from_f64(target.len() as f64);
        let s: T = self
            .value(pred)
            .iter()
            .zip(&target)
            .map(|(&p, &t)| (p - t).abs())
            .sum();
        self.push(vec![1], vec![weight * s / n], Op::L1 { pred, target, weight }, &[pred])
    }

    /// `weight * mean_b(-log softmax(logits_b)[target_b])` for `logits: [B, K]`.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: Vec<usize>, weight: T) -> Result<NodeId> {
        let ls = self.shape(logits).to_vec();
        if ls.len() != 2 || ls[0] != targets.len() {
            return shape_err("cross_entropy", format!("{} targets for logits {ls:?}", targets.len()));
        }
        let k = ls[1];
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return shape_err("cross_entropy", format!("target {bad} outside {k} classes"));
        }
        let probs = kernels::softmax_rows(self.value(logits), k);
        let mut total = T::zero();
        for (row, &t) in probs.chunks_exact(k).zip(&targets) {
            total -= row[t].max(T::min_positive_value()).ln();
        }
        let loss = weight * total / T::from_f64(targets.len() as f64);
        self.push(
            vec![1],
            vec![loss],
            Op::CrossEntropy {
                logits,
                targets,
                weight,
                probs,
            },
            &[logits],
        )
    }

    pub fn add_scalars(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        for &x in xs {
            if self.value(x).len() != 1 {
                return shape_err("add_scalars", format!("non-scalar {:?}", self.shape(x)));
            }
        }
        let s = xs.iter().map(|&x| self.value(x)[0]).sum();
        self.push(vec![1], vec![s], Op::AddScalars(xs.to_vec()), xs)
    }

    /// Reverse pass from a scalar loss. May be called once per graph.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(NnError::GraphConsumed);
        }
        if self.value(loss).len() != 1 {
            return Err(NnError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        let mut out = Gradients {
            params: vec![None; self.params.len()],
            nodes: HashMap::new(),
        };

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            match &op {
                Op::Leaf => match self.nodes[i].value {
                    Value::Param(p) => out.params[p.0] = Some(g),
                    Value::Owned(_) => {
                        out.nodes.insert(NodeId(i), g);
                    }
                },
                _ => self.backprop_op(&op, NodeId(i), &g, &mut grads)?,
            }
        }
        Ok(out)
    }

    fn send(&self, grads: &mut [Option<Vec<T>>], to: NodeId, g: Vec<T>) {
        if !self.requires_grad(to) {
            return;
        }
        match &mut grads[to.0] {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop_op(&self, op: &Op<T>, me: NodeId, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let xs = self.shape(*x);
                let (batch, inp) = (xs[0], xs[1]);
                let out = self.shape(*w)[0];
                if self.requires_grad(*x) {
                    let mut dx = vec![T::zero(); batch * inp];
                    T::gemm(batch, out, inp, T::one(), g, out as isize, 1, self.value(*w), inp as isize, 1, T::zero(), &mut dx, inp as isize, 1);
                    self.send(grads, *x, dx);
                }
                if self.requires_grad(*w) {
                    let mut dw = vec![T::zero(); out * inp];
                    T::gemm(out, batch, inp, T::one(), g, 1, out as isize, self.value(*x), inp as isize, 1, T::zero(), &mut dw, inp as isize, 1);
                    self.send(grads, *w, dw);
                }
                if let Some(b) = b {
                    let mut db = vec![T::zero(); out];
                    for row in g.chunks_exact(out) {
                        db.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
                    }
                    self.send(grads, *b, db);
                }
            }
            Op::Conv {
                x,
                w,
                b,
                geom,
                batch,
                col,
            } => {
                let gm = kernels::batch_major_to_channel_major(g, *batch, geom.c_out, geom.ho * geom.wo);
                if self.requires_grad(*w) {
                    self.send(grads, *w, kernels::conv_weight_grad(&gm, col, *batch, geom));
                }
                if self.requires_grad(*x) {
                    let dcol = kernels::conv_col_grad(&gm, self.value(*w), *batch, geom);
                    self.send(grads, *x, kernels::col2im(&dcol, *batch, geom));
                }
                if let Some(b) = b {
                    let hw = geom.ho * geom.wo;
                    let db = (0..geom.c_out)
                        .map(|o| gm[o * batch * hw..(o + 1) * batch * hw].iter().copied().sum())
                        .collect();
                    self.send(grads, *b, db);
                }
            }
            Op::Relu(x) => {
                let dx = self
                    .value(*x)
                    .iter()
                    .zip(g)
                    .map(|(&v, &d)| if v > T::zero() { d } else { T::zero() })
                    .collect();
                self.send(grads, *x, dx);
            }
            Op::Tanh(x) => {
                let dx = self
                    .value(me)
                    .iter()
                    .zip(g)
                    .map(|(&y, &d)| d * (T::one() - y * y))
                    .collect();
                self.send(grads, *x, dx);
            }
            Op::Sigmoid(x) => {
                let dx = self
                    .value(me)
                    .iter()
                    .zip(g)
                    .map(|(&y, &d)| d * y * (T::one() - y))
                    .collect();
                self.send(grads, *x, dx);
            }
            Op::Dropout { x, mask } => {
                let dx = g.iter().zip(mask).map(|(&d, &m)| d * m).collect();
                self.send(grads, *x, dx);
            }
            Op::AvgPool1d { x, k } => {
                let inv = T::from_f64(1.0 / *k as f64);
                let dx = g.iter().flat_map(|&d| std::iter::repeat_n(d * inv, *k)).collect();
                self.send(grads, *x, dx);
            }
            Op::GlobalAvgPool(x) => {
                let xs = self.shape(*x);
                let inner: usize = xs[2..].iter().product();
                let inv = T::from_f64(1.0 / inner as f64);
                let dx = g.iter().flat_map(|&d| std::iter::repeat_n(d * inv, inner)).collect();
                self.send(grads, *x, dx);
            }
            Op::Reshape(x) => self.send(grads, *x, g.to_vec()),
            Op::Concat(xs) => {
                let batch = self.shape(me)[0];
                let per_out = g.len() / batch;
                let mut offset = 0;
                for &x in xs {
                    let per = self.value(x).len() / batch;
                    if self.requires_grad(x) {
                        let mut dx = Vec::with_capacity(per * batch);
                        for b in 0..batch {
                            dx.extend_from_slice(&g[b * per_out + offset..b * per_out + offset + per]);
                        }
                        self.send(grads, x, dx);
                    }
                    offset += per;
                }
            }
            Op::Add(a, b) => {
                self.send(grads, *a, g.to_vec());
                self.send(grads, *b, g.to_vec());
            }
            Op::ChannelScale { x, s } => {
                let xs = self.shape(*x);
                let inner = self.value(*x).len() / (xs[0] * xs[1]);
                let sv = self.value(*s);
                if self.requires_grad(*x) {
                    let dx = g
                        .chunks_exact(inner)
                        .zip(sv)
                        .flat_map(|(c, &gate)| c.iter().map(move |&d| d * gate))
                        .collect();
                    self.send(grads, *x, dx);
                }
                if self.requires_grad(*s) {
                    let ds = g
                        .chunks_exact(inner)
                        .zip(self.value(*x).chunks_exact(inner))
                        .map(|(dc, xc)| dc.iter().zip(xc).map(|(&d, &v)| d * v).sum())
                        .collect();
                    self.send(grads, *s, ds);
                }
            }
            Op::Scale(x, c) => {
                let dx = g.iter().map(|&d| d * *c).collect();
                self.send(grads, *x, dx);
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                self.send(grads, *x, vec![g[0]; n]);
            }
            Op::Mse { pred, target, weight } => {
                let k = T::from_f64(2.0) * *weight * g[0] / T::from_f64(target.len() as f64);
                let dx = self
                    .value(*pred)
                    .iter()
                    .zip(target)
                    .map(|(&p, &t)| k * (p - t))
                    .collect();
                self.send(grads, *pred, dx);
            }
            Op::L1 { pred, target, weight } => {
                let k = *weight * g[0] / T::from_f64(target.len() as f64);
                let dx = self
                    .value(*pred)
                    .iter()
                    .zip(target)
                    .map(|(&p, &t)| {
                        let d = p - t;
                        if d > T::zero() {
                            k
                        } else if d < T::zero() {
                            -k
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                self.send(grads, *pred, dx);
            }
            Op::CrossEntropy {
                logits,
                targets,
                weight,
                probs,
            } => {
                let k = self.shape(*logits)[1];
                let scale = *weight * g[0] / T::from_f64(targets.len() as f64);
                let mut dx = probs.clone();
                for (row, &t) in dx.chunks_exact_mut(k).zip(targets) {
                    row[t] -= T::one();
                    row.iter_mut().for_each(|v| *v *= scale);
                }
                self.send(grads, *logits, dx);
            }
            Op::AddScalars(xs) => {
                for &x in xs {
                    self.send(grads, x, vec![g[0]]);
                }
            }
        }
        Ok(())
    }
}
