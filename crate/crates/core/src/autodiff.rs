//! Reverse-mode automatic differentiation over a linear tape.
//!
//! A [`Graph`] records every operation in execution order, so the tape is
//! topologically sorted by construction. [`Graph::backward`] walks it once in
//! reverse and accumulates adjoints in a fixed order.

use crate::error::{Error, Result};
use crate::kernels::{self, NormSaved};
use crate::tensor::{Real, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    NormTrain { x: Var, gain: Var, shift: Var, saved: NormSaved<T> },
    NormFixed { x: Var, gain: Var, shift: Var, inv_std: Vec<T>, xhat: Vec<T> },
    Relu { x: Var },
    Sigmoid { x: Var },
    Add { a: Var, b: Var },
    Affine { x: Var, alpha: T },
    MulAdd { a: Var, b: Var, c: Var, d: Var },
    Mul { a: Var, b: Var },
    Resize { x: Var },
    Sum { x: Var },
    CrossEntropy { logits: Var, probs: Vec<T>, targets: Vec<u8>, weights: Vec<T>, denom: T },
    Bce { logits: Var, probs: Vec<T>, targets: Vec<T>, weights: Vec<T>, clip_eps: T, denom: T },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::NormTrain { .. } | Op::NormFixed { .. } => "channel_norm",
            Op::Relu { .. } => "relu",
            Op::Sigmoid { .. } => "sigmoid",
            Op::Add { .. } => "add",
            Op::Affine { .. } => "affine",
            Op::MulAdd { .. } => "broadcast_mul_add",
            Op::Mul { .. } => "broadcast_mul",
            Op::Resize { .. } => "bilinear_resize",
            Op::Sum { .. } => "sum",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Bce { .. } => "binary_cross_entropy",
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    site: String,
}

/// The tape. One graph per forward pass; it is not shared between threads.
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    scope: Vec<String>,
}

/// Adjoints of every leaf created with [`Graph::param`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), scope: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Names the layer subsequent operations belong to (used in error messages).
    pub fn push_scope(&mut self, name: impl Into<String>) {
        self.scope.push(name.into());
    }

    pub fn pop_scope(&mut self) {
        self.scope.pop();
    }

    /// Layer name recorded for a value.
    pub fn site(&self, v: Var) -> &str {
        &self.nodes[v.0].site
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        let site = self.scope.join(".");
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad, site });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        let site = self.scope.join(".");
        if !value.all_finite() {
            return Err(Error::numeric(
                format!("{} #{} in {}", op.name(), self.nodes.len(), if site.is_empty() { "<root>" } else { &site }),
                "produced a non-finite value",
            ));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad, site });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let y = kernels::conv2d_forward(self.value(x), self.value(w), self.value(b), stride, pad)?;
        self.push(y, Op::Conv2d { x, w, b, stride, pad }, &[x, w, b])
    }

    /// Normalization with batch statistics. Returns the output together with
    /// the per-channel batch mean and biased variance.
    pub fn channel_norm_train(&mut self, x: Var, gain: Var, shift: Var, eps: T) -> Result<(Var, Vec<T>, Vec<T>)> {
        if eps <= T::zero() {
            return Err(Error::Config("channel_norm eps must be positive".into()));
        }
        let (y, saved) = kernels::channel_norm_train(self.value(x), self.value(gain), self.value(shift), eps)?;
        let (mean, var) = (saved.mean.clone(), saved.var.clone());
        let v = self.push(y, Op::NormTrain { x, gain, shift, saved }, &[x, gain, shift])?;
        Ok((v, mean, var))
    }

    /// Normalization with fixed (running) statistics.
    pub fn channel_norm_fixed(&mut self, x: Var, gain: Var, shift: Var, mean: &[T], var: &[T], eps: T) -> Result<Var> {
        if eps <= T::zero() {
            return Err(Error::Config("channel_norm eps must be positive".into()));
        }
        let xt = self.value(x);
        let (y, inv_std) = kernels::channel_norm_fixed(xt, self.value(gain), self.value(shift), mean, var, eps)?;
        let [n, c, h, w] = xt.dims4()?;
        let hw = h * w;
        let mut xhat = xt.data().to_vec();
        for b in 0..n {
            for ch in 0..c {
                for v in &mut xhat[(b * c + ch) * hw..][..hw] {
                    *v = (*v - mean[ch]) * inv_std[ch];
                }
            }
        }
        self.push(y, Op::NormFixed { x, gain, shift, inv_std, xhat }, &[x, gain, shift])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let y = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(y, Op::Relu { x }, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let y = self.value(x).map(sigmoid);
        self.push(y, Op::Sigmoid { x }, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Contract(format!("add of shapes {:?} and {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&p, &q)| p + q).collect();
        let y = Tensor::new(ta.shape(), data)?;
        self.push(y, Op::Add { a, b }, &[a, b])
    }

    /// `alpha * x + beta`, elementwise.
    pub fn affine(&mut self, x: Var, alpha: T, beta: T) -> Result<Var> {
        let y = self.value(x).map(|v| alpha * v + beta);
        self.push(y, Op::Affine { x, alpha }, &[x])
    }

    /// `a ⊙ b + c ⊙ d` with size-1 broadcasting on 4-D operands.
    pub fn broadcast_mul_add(&mut self, a: Var, b: Var, c: Var, d: Var) -> Result<Var> {
        let y = kernels::broadcast_mul_add(self.value(a), self.value(b), self.value(c), self.value(d))?;
        self.push(y, Op::MulAdd { a, b, c, d }, &[a, b, c, d])
    }

    pub fn broadcast_mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = kernels::broadcast_mul(self.value(a), self.value(b))?;
        self.push(y, Op::Mul { a, b }, &[a, b])
    }

    pub fn bilinear_resize(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let y = kernels::bilinear_resize(self.value(x), out_h, out_w)?;
        self.push(y, Op::Resize { x }, &[x])
    }

    /// Sum of all elements as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum { x }, &[x])
    }

    /// `Σ_p weights[p] · (−log softmax(logits)[p, targets[p]]) / denom` where
    /// the softmax runs over the channel axis of N×K×H×W logits. Pixels with
    /// zero weight are skipped and may carry any target value.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[u8], weights: Vec<T>, denom: T) -> Result<Var> {
        let z = self.value(logits);
        let [n, k, h, w] = z.dims4()?;
        let hw = h * w;
        if targets.len() != n * hw || weights.len() != n * hw {
            return Err(Error::Contract(format!(
                "cross_entropy logits {:?} need {} targets and weights, got {} and {}",
                z.shape(),
                n * hw,
                targets.len(),
                weights.len()
            )));
        }
        if denom <= T::zero() {
            return Err(Error::Contract("cross_entropy normalizer must be positive".into()));
        }
        let zd = z.data();
        let mut probs = vec![T::zero(); zd.len()];
        let mut total = T::zero();
        for b in 0..n {
            let base = b * k * hw;
            for p in 0..hw {
                let mut mx = T::neg_infinity();
                for c in 0..k {
                    mx = mx.max(zd[base + c * hw + p]);
                }
                let mut se = T::zero();
                for c in 0..k {
                    let e = (zd[base + c * hw + p] - mx).exp();
                    probs[base + c * hw + p] = e;
                    se += e;
                }
                for c in 0..k {
                    probs[base + c * hw + p] = probs[base + c * hw + p] / se;
                }
                let wgt = weights[b * hw + p];
                if wgt != T::zero() {
                    let t = targets[b * hw + p] as usize;
                    if t >= k {
                        return Err(Error::Contract(format!("cross_entropy target {t} out of range for {k} classes")));
                    }
                    let nll = se.ln() + mx - zd[base + t * hw + p];
                    total += wgt * nll;
                }
            }
        }
        let y = Tensor::scalar(total / denom);
        let targets = targets.to_vec();
        self.push(y, Op::CrossEntropy { logits, probs, targets, weights, denom }, &[logits])
    }

    /// Binary cross-entropy between `sigmoid(logits)` (clipped to
    /// `[clip_eps, 1 − clip_eps]`) and targets, weighted and divided by `denom`.
    pub fn binary_cross_entropy(&mut self, logits: Var, targets: Vec<T>, weights: Vec<T>, clip_eps: T, denom: T) -> Result<Var> {
        let z = self.value(logits);
        if targets.len() != z.numel() || weights.len() != z.numel() {
            return Err(Error::Contract(format!(
                "binary_cross_entropy logits {:?} need {} targets, got {}",
                z.shape(),
                z.numel(),
                targets.len()
            )));
        }
        if denom <= T::zero() {
            return Err(Error::Contract("binary_cross_entropy normalizer must be positive".into()));
        }
        let probs: Vec<T> = z.data().iter().map(|&v| sigmoid(v)).collect();
        let hi = T::one() - clip_eps;
        let mut total = T::zero();
        for ((&p, &b), &wgt) in probs.iter().zip(&targets).zip(&weights) {
            if wgt == T::zero() {
                continue;
            }
            let pc = p.max(clip_eps).min(hi);
            total += wgt * -(b * pc.ln() + (T::one() - b) * (T::one() - pc).ln());
        }
        let y = Tensor::scalar(total / denom);
        self.push(y, Op::Bce { logits, probs, targets, weights, clip_eps, denom }, &[logits])
    }

    /// Reverse sweep from a scalar.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::Contract(format!("backward needs a scalar loss, got shape {:?}", lv.shape())));
        }
        let mut adj: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::full(lv.shape(), T::one()));
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = adj[id].take() else { continue };
            self.backprop_node(node, &g, &mut adj)?;
        }
        let grads = adj
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| if matches!(n.op, Op::Leaf) && n.requires_grad { g } else { None })
            .collect();
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop_node(&self, node: &Node<T>, g: &Tensor<T>, adj: &mut [Option<Tensor<T>>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, stride, pad } => {
                let cg = kernels::conv2d_backward(
                    self.value(*x),
                    self.value(*w),
                    self.value(*b),
                    *stride,
                    *pad,
                    g,
                    self.wants(*x),
                )?;
                if let Some(dx) = cg.dx {
                    accumulate(adj, *x, dx);
                }
                if self.wants(*w) {
                    accumulate(adj, *w, cg.dweight);
                }
                if self.wants(*b) {
                    accumulate(adj, *b, cg.dbias);
                }
            }
            Op::NormTrain { x, gain, shift, saved } => {
                let dims = self.value(*x).dims4()?;
                let ng = kernels::channel_norm_train_backward(dims, self.value(*gain), saved, g)?;
                if self.wants(*x) {
                    accumulate(adj, *x, ng.dx);
                }
                if self.wants(*gain) {
                    accumulate(adj, *gain, ng.dgain);
                }
                if self.wants(*shift) {
                    accumulate(adj, *shift, ng.dshift);
                }
            }
            Op::NormFixed { x, gain, shift, inv_std, xhat } => {
                let [n, c, h, w] = self.value(*x).dims4()?;
                let hw = h * w;
                let gd = g.data();
                let gain_d = self.value(*gain).data();
                let mut dx = vec![T::zero(); gd.len()];
                let mut dgain = vec![T::zero(); c];
                let mut dshift = vec![T::zero(); c];
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * hw;
                        let s = gain_d[ch] * inv_std[ch];
                        for i in off..off + hw {
                            dx[i] = gd[i] * s;
                        }
                        dgain[ch] += kernels::dot(&gd[off..off + hw], &xhat[off..off + hw]);
                        dshift[ch] += kernels::sum_slice(&gd[off..off + hw]);
                    }
                }
                if self.wants(*x) {
                    accumulate(adj, *x, Tensor::new(&[n, c, h, w], dx)?);
                }
                if self.wants(*gain) {
                    accumulate(adj, *gain, Tensor::new(&[c], dgain)?);
                }
                if self.wants(*shift) {
                    accumulate(adj, *shift, Tensor::new(&[c], dshift)?);
                }
            }
            Op::Relu { x } => {
                let xv = self.value(*x);
                let data = xv
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &d)| if v > T::zero() { d } else { T::zero() })
                    .collect();
                accumulate(adj, *x, Tensor::new(xv.shape(), data)?);
            }
            Op::Sigmoid { x } => {
                let data = node
                    .value
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&s, &d)| d * s * (T::one() - s))
                    .collect();
                accumulate(adj, *x, Tensor::new(node.value.shape(), data)?);
            }
            Op::Add { a, b } => {
                if self.wants(*a) {
                    accumulate(adj, *a, g.clone());
                }
                if self.wants(*b) {
                    accumulate(adj, *b, g.clone());
                }
            }
            Op::Affine { x, alpha } => {
                accumulate(adj, *x, g.map(|d| *alpha * d));
            }
            Op::MulAdd { a, b, c, d } => {
                let target = node.value.dims4()?;
                let ops = [*a, *b, *c, *d];
                let st = ops.map(|v| kernels::broadcast_strides(self.value(v).shape(), target));
                let vals = ops.map(|v| self.value(v).data());
                let mut grads: Vec<Option<Vec<T>>> =
                    ops.iter().map(|&v| self.wants(v).then(|| vec![T::zero(); self.value(v).numel()])).collect();
                let gd = g.data();
                kernels::for_each_broadcast(target, st, |i, off| {
                    let gi = gd[i];
                    // pairs (a,b) and (c,d): each factor's adjoint is the other factor
                    for (k, partner) in [(0, 1), (1, 0), (2, 3), (3, 2)] {
                        if let Some(buf) = grads[k].as_mut() {
                            buf[off[k]] += gi * vals[partner][off[partner]];
                        }
                    }
                });
                for (k, v) in ops.iter().enumerate() {
                    if let Some(buf) = grads[k].take() {
                        accumulate(adj, *v, Tensor::new(self.value(*v).shape(), buf)?);
                    }
                }
            }
            Op::Mul { a, b } => {
                let target = node.value.dims4()?;
                let ops = [*a, *b];
                let st = ops.map(|v| kernels::broadcast_strides(self.value(v).shape(), target));
                let vals = ops.map(|v| self.value(v).data());
                let mut grads: Vec<Option<Vec<T>>> =
                    ops.iter().map(|&v| self.wants(v).then(|| vec![T::zero(); self.value(v).numel()])).collect();
                let gd = g.data();
                kernels::for_each_broadcast(target, st, |i, off| {
                    if let Some(buf) = grads[0].as_mut() {
                        buf[off[0]] += gd[i] * vals[1][off[1]];
                    }
                    if let Some(buf) = grads[1].as_mut() {
                        buf[off[1]] += gd[i] * vals[0][off[0]];
                    }
                });
                for (k, v) in ops.iter().enumerate() {
                    if let Some(buf) = grads[k].take() {
                        accumulate(adj, *v, Tensor::new(self.value(*v).shape(), buf)?);
                    }
                }
            }
            Op::Resize { x } => {
                let dx = kernels::bilinear_resize_backward(self.value(*x).dims4()?, g)?;
                accumulate(adj, *x, dx);
            }
            Op::Sum { x } => {
                let xv = self.value(*x);
                accumulate(adj, *x, Tensor::full(xv.shape(), g.data()[0]));
            }
            Op::CrossEntropy { logits, probs, targets, weights, denom } => {
                let z = self.value(*logits);
                let [n, k, h, w] = z.dims4()?;
                let hw = h * w;
                let scale = g.data()[0] / *denom;
                let mut dz = vec![T::zero(); probs.len()];
                for b in 0..n {
                    let base = b * k * hw;
                    for p in 0..hw {
                        let wgt = weights[b * hw + p];
                        if wgt == T::zero() {
                            continue;
                        }
                        let s = scale * wgt;
                        for c in 0..k {
                            dz[base + c * hw + p] = s * probs[base + c * hw + p];
                        }
                        let t = targets[b * hw + p] as usize;
                        dz[base + t * hw + p] -= s;
                    }
                }
                accumulate(adj, *logits, Tensor::new(z.shape(), dz)?);
            }
            Op::Bce { logits, probs, targets, weights, clip_eps, denom } => {
                let z = self.value(*logits);
                let scale = g.data()[0] / *denom;
                let hi = T::one() - *clip_eps;
                let dz = probs
                    .iter()
                    .zip(targets)
                    .zip(weights)
                    .map(|((&p, &b), &wgt)| {
                        if wgt == T::zero() || p < *clip_eps || p > hi {
                            T::zero()
                        } else {
                            scale * wgt * (p - b)
                        }
                    })
                    .collect();
                accumulate(adj, *logits, Tensor::new(z.shape(), dz)?);
            }
        }
        Ok(())
    }
}

fn accumulate<T: Real>(adj: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut adj[v.0] {
        Some(acc) => {
            for (a, &d) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += d;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// Logistic function, evaluated without overflow for large |x|.
///
/// The result is clamped to the open unit interval: between the smallest
/// positive normal and the largest value below one.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    let s = if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    };
    let below_one = T::one() - T::epsilon() / T::of(2.0);
    s.max(T::min_positive_value()).min(below_one)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn gradient_of_sum_is_ones() {
        let mut g = Graph::new();
        let x = g.param(t(&[1, 2, 2, 2], &[1.0, -2.0, 3.0, 0.5, 0.0, 7.0, -1.0, 2.0]));
        let s = g.sum(x).unwrap();
        let grads = g.backward(s).unwrap();
        assert!(grads.get(x).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn gradient_of_half_square_is_identity() {
        let vals = [0.3, -1.2, 2.5, 4.0];
        let mut g = Graph::new();
        let x = g.param(t(&[1, 1, 2, 2], &vals));
        let sq = g.broadcast_mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        let half = g.affine(s, 0.5, 0.0).unwrap();
        let grads = g.backward(half).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &vals);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.param(t(&[1, 1, 1, 2], &[1.0, 2.0]));
        let y = g.relu(x).unwrap();
        assert!(matches!(g.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let x = g.param(t(&[1, 1, 1, 2], &[1.0, 2.0]));
        let c = g.constant(t(&[1, 1, 1, 2], &[3.0, 4.0]));
        let y = g.broadcast_mul(x, c).unwrap();
        let s = g.sum(y).unwrap();
        let grads = g.backward(s).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn relu_values() {
        let mut g = Graph::new();
        let x = g.constant(t(&[3], &[-1.0, 0.0, 2.0]));
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn sigmoid_is_strictly_inside_unit_interval() {
        for x in [-1e6f64, -800.0, -40.0, -1.0, 0.0, 1.0, 40.0, 1e6] {
            let s = sigmoid(x);
            assert!(s > 0.0 && s < 1.0, "sigmoid({x}) = {s}");
        }
        assert_eq!(sigmoid(0.0f64), 0.5);
    }

    #[test]
    fn non_finite_output_names_the_scope() {
        let mut g = Graph::new();
        g.push_scope("stem");
        g.push_scope("conv1");
        let x = g.constant(t(&[1], &[1e308]));
        let err = g.affine(x, 10.0, 0.0).unwrap_err();
        assert!(err.to_string().contains("stem.conv1"), "{err}");
    }
}
