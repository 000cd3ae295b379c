//! Reverse-mode differentiation by operation recording.
//!
//! Every forward op appends a node holding its value and the handles of its
//! inputs. [`Tape::backward`] walks the nodes in reverse and accumulates
//! adjoints into the `grad` slot of every leaf created with
//! `requires_grad = true`.

use super::array::{NdArray, Real};
use super::kernels;
use crate::error::{shape_err, Error, Result};

/// Clamp applied to probabilities before taking logarithms in [`Tape::bce`].
pub const BCE_EPS: f64 = 1e-7;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Conv3x3 { x: Var, k: Var, b: Var },
    Conv1x1 { x: Var, k: Var, b: Var },
    MaxPool2 { x: Var, argmax: Vec<usize> },
    Upsample2 { x: Var },
    Concat { a: Var, b: Var },
    Slice { x: Var, start: usize },
    Relu { x: Var },
    Sigmoid { x: Var },
    Square { x: Var },
    Scale { x: Var, factor: T },
    Sum { x: Var },
    Dot { x: Var, weights: NdArray<T> },
    WeightedSum { terms: Vec<(Var, T)> },
    Bce { pred: Var, target: NdArray<T>, mask: Option<Vec<bool>>, count: usize },
}

struct Node<T> {
    value: NdArray<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<NdArray<T>>,
}

/// A recorded computation.
pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: NdArray<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&mut self, value: NdArray<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, value: NdArray<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &NdArray<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Accumulated gradient of a tracked leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&NdArray<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn conv2d(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let value = kernels::conv3x3_forward(self.value(x), self.value(k), self.value(b))?;
        let rg = self.rg(x) || self.rg(k) || self.rg(b);
        Ok(self.push(value, Op::Conv3x3 { x, k, b }, rg))
    }

    pub fn conv1x1(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let value = kernels::conv1x1_forward(self.value(x), self.value(k), self.value(b))?;
        let rg = self.rg(x) || self.rg(k) || self.rg(b);
        Ok(self.push(value, Op::Conv1x1 { x, k, b }, rg))
    }

    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let (value, argmax) = kernels::max_pool2_forward(self.value(x))?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::MaxPool2 { x, argmax }, rg))
    }

    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let value = kernels::upsample2_forward(self.value(x))?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Upsample2 { x }, rg))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = NdArray::concat_channels(&[self.value(a), self.value(b)])?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Concat { a, b }, rg))
    }

    /// Channels `start..start+len` of a `[C,H,W]` node.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let value = self.value(x).channels(start, len)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Slice { x, start }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(T::zero()));
        let rg = self.rg(x);
        self.push(value, Op::Relu { x }, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(kernels::sigmoid);
        let rg = self.rg(x);
        self.push(value, Op::Sigmoid { x }, rg)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        let rg = self.rg(x);
        self.push(value, Op::Square { x }, rg)
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.rg(x);
        self.push(value, Op::Scale { x, factor }, rg)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().copied().sum();
        let rg = self.rg(x);
        self.push(NdArray::scalar(s), Op::Sum { x }, rg)
    }

    /// `sum(x * weights)` for a constant weight array of the same shape.
    pub fn dot(&mut self, x: Var, weights: NdArray<T>) -> Result<Var> {
        if self.value(x).shape() != weights.shape() {
            return Err(shape_err!("dot: {:?} vs {:?}", self.value(x).shape(), weights.shape()));
        }
        let s: T = self.value(x).data().iter().zip(weights.data()).map(|(&a, &b)| a * b).sum();
        let rg = self.rg(x);
        Ok(self.push(NdArray::scalar(s), Op::Dot { x, weights }, rg))
    }

    /// `sum_i c_i * x_i` over same-shaped nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Result<Var> {
        let (first, _) = *terms.first().ok_or_else(|| shape_err!("weighted_sum of zero terms"))?;
        let shape = self.value(first).shape().to_vec();
        let mut acc = NdArray::zeros(&shape);
        let mut rg = false;
        for &(v, c) in terms {
            let val = self.value(v);
            if val.shape() != shape.as_slice() {
                return Err(shape_err!("weighted_sum: {:?} vs {:?}", val.shape(), shape));
            }
            for (a, &x) in acc.data_mut().iter_mut().zip(val.data()) {
                *a += c * x;
            }
            rg |= self.rg(v);
        }
        Ok(self.push(acc, Op::WeightedSum { terms: terms.to_vec() }, rg))
    }

    /// Mean binary cross-entropy between `pred` and a constant `target`,
    /// optionally restricted to elements where `mask` is set. Probabilities
    /// are clamped to `[BCE_EPS, 1 - BCE_EPS]` before the logarithm.
    pub fn bce(&mut self, pred: Var, target: &NdArray<T>, mask: Option<&[bool]>) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(shape_err!("bce: prediction {:?} vs target {:?}", p.shape(), target.shape()));
        }
        if let Some(m) = mask {
            if m.len() != p.len() {
                return Err(shape_err!("bce: mask has {} elements, prediction {}", m.len(), p.len()));
            }
        }
        let eps = T::lit(BCE_EPS);
        let mut total = T::zero();
        let mut count = 0usize;
        for (i, (&pv, &tv)) in p.data().iter().zip(target.data()).enumerate() {
            if mask.is_some_and(|m| !m[i]) {
                continue;
            }
            let c = pv.max(eps).min(T::one() - eps);
            total -= tv * c.ln() + (T::one() - tv) * (T::one() - c).ln();
            count += 1;
        }
        if count == 0 {
            return Err(Error::InvalidArgument("bce over an empty mask".into()));
        }
        let value = NdArray::scalar(total / T::lit(count as f64));
        let rg = self.rg(pred);
        Ok(self.push(
            value,
            Op::Bce { pred, target: target.clone(), mask: mask.map(<[bool]>::to_vec), count },
            rg,
        ))
    }

    /// Back-propagates from a scalar node, accumulating into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(shape_err!("backward needs a scalar loss, got shape {:?}", self.value(loss).shape()));
        }
        let mut adj: Vec<Option<NdArray<T>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(NdArray::full(self.value(loss).shape(), T::one()));

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => {
                        for (a, &v) in acc.data_mut().iter_mut().zip(g.data()) {
                            *a += v;
                        }
                    }
                    None => node.grad = Some(g),
                }
                continue;
            }
            for (input, grad) in self.local_grads(i, &g)? {
                if !self.rg(input) {
                    continue;
                }
                match &mut adj[input.0] {
                    Some(acc) => {
                        for (a, &v) in acc.data_mut().iter_mut().zip(grad.data()) {
                            *a += v;
                        }
                    }
                    slot @ None => *slot = Some(grad),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &NdArray<T>) -> Result<Vec<(Var, NdArray<T>)>> {
        let node = &self.nodes[i];
        let out = match &node.op {
            Op::Leaf => Vec::new(),
            &Op::Conv3x3 { x, k, b } => {
                let (dx, dk, db) =
                    kernels::conv3x3_backward(self.value(x), self.value(k), g, self.rg(x));
                let mut v = vec![(k, dk), (b, db)];
                if let Some(dx) = dx {
                    v.push((x, dx));
                }
                v
            }
            &Op::Conv1x1 { x, k, b } => {
                let (dx, dk, db) =
                    kernels::conv1x1_backward(self.value(x), self.value(k), g, self.rg(x));
                let mut v = vec![(k, dk), (b, db)];
                if let Some(dx) = dx {
                    v.push((x, dx));
                }
                v
            }
            Op::MaxPool2 { x, argmax } => {
                vec![(*x, kernels::max_pool2_backward(self.value(*x).shape(), argmax, g))]
            }
            &Op::Upsample2 { x } => vec![(x, kernels::upsample2_backward(self.value(x).shape(), g))],
            &Op::Concat { a, b } => {
                let ca = self.value(a).shape()[0];
                let cb = self.value(b).shape()[0];
                vec![(a, g.channels(0, ca)?), (b, g.channels(ca, cb)?)]
            }
            &Op::Slice { x, start } => {
                let src = self.value(x);
                let (_, h, w) = src.chw()?;
                let mut dx = NdArray::zeros(src.shape());
                let off = start * h * w;
                dx.data_mut()[off..off + g.len()].copy_from_slice(g.data());
                vec![(x, dx)]
            }
            &Op::Relu { x } => {
                let mut dx = g.clone();
                for (d, &v) in dx.data_mut().iter_mut().zip(self.value(x).data()) {
                    if v <= T::zero() {
                        *d = T::zero();
                    }
                }
                vec![(x, dx)]
            }
            &Op::Sigmoid { x } => {
                let mut dx = g.clone();
                for (d, &s) in dx.data_mut().iter_mut().zip(node.value.data()) {
                    *d *= s * (T::one() - s);
                }
                vec![(x, dx)]
            }
            &Op::Square { x } => {
                let mut dx = g.clone();
                for (d, &v) in dx.data_mut().iter_mut().zip(self.value(x).data()) {
                    *d *= v + v;
                }
                vec![(x, dx)]
            }
            &Op::Scale { x, factor } => vec![(x, g.map(|v| v * factor))],
            &Op::Sum { x } => {
                let s = g.data()[0];
                vec![(x, NdArray::full(self.value(x).shape(), s))]
            }
            Op::Dot { x, weights } => {
                let s = g.data()[0];
                vec![(*x, weights.map(|w| w * s))]
            }
            Op::WeightedSum { terms } => terms.iter().map(|&(v, c)| (v, g.map(|x| x * c))).collect(),
            Op::Bce { pred, target, mask, count } => {
                let s = g.data()[0] / T::lit(*count as f64);
                let eps = T::lit(BCE_EPS);
                let p = self.value(*pred);
                let mut dp = NdArray::zeros(p.shape());
                for (idx, d) in dp.data_mut().iter_mut().enumerate() {
                    if mask.as_ref().is_some_and(|m| !m[idx]) {
                        continue;
                    }
                    let c = p.data()[idx].max(eps).min(T::one() - eps);
                    *d = s * (c - target.data()[idx]) / (c * (T::one() - c));
                }
                vec![(*pred, dp)]
            }
        };
        Ok(out)
    }
}
