//! Named parameter storage and the layer building blocks shared by the RPEM
//! and the network: convolution, channel normalization and residual modules.

use std::collections::BTreeMap;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Real, Tensor};

/// Normalization epsilon used by every norm layer.
pub const NORM_EPS: f64 = 1e-5;

/// Momentum of the running-statistics update.
pub const NORM_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    ConvWeight,
    ConvBias,
    NormGain,
    NormShift,
}

impl ParamKind {
    /// Norm gains and shifts are excluded from weight decay.
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::ConvWeight | ParamKind::ConvBias)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor<T>,
}

/// Non-trainable state (running statistics).
#[derive(Debug, Clone, PartialEq)]
pub struct Buffer<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Ordered, uniquely named parameters plus buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    buffers: Vec<Buffer<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore { params: Vec::new(), buffers: Vec::new(), index: BTreeMap::new() }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Buffer<T>] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [Buffer<T>] {
        &mut self.buffers
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Total number of trainable scalars.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Trainable scalars whose name starts with `prefix`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.params.iter().filter(|p| p.name.starts_with(prefix)).map(|p| p.value.numel()).sum()
    }

    fn insert(&mut self, name: String, kind: ParamKind, value: Tensor<T>) -> Result<usize> {
        if self.index.contains_key(&name) || self.buffers.iter().any(|b| b.name == name) {
            return Err(Error::Contract(format!("duplicate parameter name '{name}'")));
        }
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param { name, kind, value });
        Ok(self.params.len() - 1)
    }

    fn insert_buffer(&mut self, name: String, value: Tensor<T>) -> Result<usize> {
        if self.index.contains_key(&name) || self.buffers.iter().any(|b| b.name == name) {
            return Err(Error::Contract(format!("duplicate buffer name '{name}'")));
        }
        self.buffers.push(Buffer { name, value });
        Ok(self.buffers.len() - 1)
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param { name: p.name.clone(), kind: p.kind, value: p.value.cast() })
                .collect(),
            buffers: self.buffers.iter().map(|b| Buffer { name: b.name.clone(), value: b.value.cast() }).collect(),
            index: self.index.clone(),
        }
    }

    /// Every parameter and buffer finite.
    pub fn check_finite(&self) -> Result<()> {
        for p in &self.params {
            if !p.value.all_finite() {
                return Err(Error::numeric(p.name.clone(), "parameter is not finite"));
            }
        }
        for b in &self.buffers {
            if !b.value.all_finite() {
                return Err(Error::numeric(b.name.clone(), "buffer is not finite"));
            }
        }
        Ok(())
    }

    /// Folds batch statistics into the running buffers.
    pub fn apply_norm_updates(&mut self, updates: &[NormUpdate<T>]) {
        let m = T::of(NORM_MOMENTUM);
        for u in updates {
            let correction = if u.count > 1 { T::of(u.count as f64 / (u.count - 1) as f64) } else { T::one() };
            let rm = self.buffers[u.mean_buf].value.data_mut();
            for (r, &b) in rm.iter_mut().zip(&u.mean) {
                *r = (T::one() - m) * *r + m * b;
            }
            let rv = self.buffers[u.var_buf].value.data_mut();
            for (r, &b) in rv.iter_mut().zip(&u.var) {
                *r = (T::one() - m) * *r + m * b * correction;
            }
        }
    }
}

/// Creates parameters under a name prefix with seeded He-normal weights.
///
/// Each tensor draws from its own stream keyed by its full name, so a
/// parameter's initial value depends only on the seed and its name.
pub struct ParamBuilder<T> {
    store: ParamStore<T>,
    seed: u64,
    prefix: Vec<String>,
}

impl<T: Real> ParamBuilder<T> {
    pub fn new(seed: u64) -> Self {
        ParamBuilder { store: ParamStore::default(), seed, prefix: Vec::new() }
    }

    pub fn finish(self) -> ParamStore<T> {
        self.store
    }

    pub fn push(&mut self, name: &str) {
        self.prefix.push(name.to_string());
    }

    pub fn pop(&mut self) {
        self.prefix.pop();
    }

    fn full_name(&self, leaf: &str) -> String {
        let mut s = self.prefix.join(".");
        if !s.is_empty() {
            s.push('.');
        }
        s.push_str(leaf);
        s
    }

    /// Scope name for the current prefix.
    pub fn scope(&self) -> String {
        self.prefix.join(".")
    }

    pub fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize) -> Result<ConvLayer> {
        self.conv_scaled(name, cin, cout, k, stride, 1.0)
    }

    /// Convolution whose He-normal weights are multiplied by `scale`.
    pub fn conv_scaled(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize, scale: f64) -> Result<ConvLayer> {
        if k % 2 == 0 {
            return Err(Error::Config(format!("kernel size must be odd, got {k}")));
        }
        self.push(name);
        let wname = self.full_name("weight");
        let std = (2.0 / (cin * k * k) as f64).sqrt() * scale;
        let draws = rng::normals(&mut rng::stream(self.seed, &wname), cout * cin * k * k);
        let weight = Tensor::new(&[cout, cin, k, k], draws.into_iter().map(|v| T::of(v * std)).collect())?;
        let w = self.store.insert(wname, ParamKind::ConvWeight, weight)?;
        let b = self.store.insert(self.full_name("bias"), ParamKind::ConvBias, Tensor::zeros(&[cout]))?;
        let scope = self.scope();
        self.pop();
        Ok(ConvLayer { w, b, cin, cout, k, stride, pad: k / 2, scope })
    }

    pub fn norm(&mut self, name: &str, channels: usize) -> Result<NormLayer> {
        self.push(name);
        let gain = self.store.insert(self.full_name("gain"), ParamKind::NormGain, Tensor::full(&[channels], T::one()))?;
        let shift = self.store.insert(self.full_name("shift"), ParamKind::NormShift, Tensor::zeros(&[channels]))?;
        let mean_buf = self.store.insert_buffer(self.full_name("running_mean"), Tensor::zeros(&[channels]))?;
        let var_buf = self.store.insert_buffer(self.full_name("running_var"), Tensor::full(&[channels], T::one()))?;
        let scope = self.scope();
        self.pop();
        Ok(NormLayer { gain, shift, mean_buf, var_buf, channels, scope })
    }

    /// conv3×3 → norm → relu → conv3×3 → norm, plus skip, then relu. The skip
    /// is a strided 1×1 convolution when the stride or channel count changes.
    pub fn residual(&mut self, name: &str, cin: usize, cout: usize, stride: usize) -> Result<ResidualBlock> {
        self.push(name);
        let conv1 = self.conv("conv1", cin, cout, 3, stride)?;
        let norm1 = self.norm("norm1", cout)?;
        let conv2 = self.conv("conv2", cout, cout, 3, 1)?;
        let norm2 = self.norm("norm2", cout)?;
        let skip = if stride != 1 || cin != cout { Some(self.conv("skip", cin, cout, 1, stride)?) } else { None };
        let scope = self.scope();
        self.pop();
        Ok(ResidualBlock { conv1, norm1, conv2, norm2, skip, scope })
    }

    /// conv3×3 → norm → relu.
    pub fn conv_module(&mut self, name: &str, cin: usize, cout: usize) -> Result<ConvModule> {
        self.push(name);
        let conv = self.conv("conv", cin, cout, 3, 1)?;
        let norm = self.norm("norm", cout)?;
        let scope = self.scope();
        self.pop();
        Ok(ConvModule { conv, norm, scope })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Batch statistics observed by one norm layer during a training forward.
#[derive(Debug, Clone)]
pub struct NormUpdate<T> {
    pub mean_buf: usize,
    pub var_buf: usize,
    pub mean: Vec<T>,
    pub var: Vec<T>,
    /// Elements per channel the statistics were taken over.
    pub count: usize,
}

/// One forward pass: the graph, the parameter leaves and collected statistics.
pub struct Ctx<'a, T: Real> {
    pub g: &'a mut Graph<T>,
    store: &'a ParamStore<T>,
    vars: Vec<Var>,
    pub mode: Mode,
    pub norm_updates: Vec<NormUpdate<T>>,
}

impl<'a, T: Real> Ctx<'a, T> {
    /// Registers every parameter of `store` as a differentiable leaf.
    pub fn new(g: &'a mut Graph<T>, store: &'a ParamStore<T>, mode: Mode) -> Self {
        let vars = store.params().iter().map(|p| g.param(p.value.clone())).collect();
        Ctx { g, store, vars, mode, norm_updates: Vec::new() }
    }

    /// Uses leaves already on the graph, one per parameter in store order.
    pub fn with_vars(g: &'a mut Graph<T>, store: &'a ParamStore<T>, vars: Vec<Var>, mode: Mode) -> Self {
        assert_eq!(vars.len(), store.params().len(), "one leaf per parameter");
        Ctx { g, store, vars, mode, norm_updates: Vec::new() }
    }

    pub fn var(&self, param: usize) -> Var {
        self.vars[param]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }
}

#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub w: usize,
    pub b: usize,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub scope: String,
}

impl ConvLayer {
    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let (w, b) = (ctx.var(self.w), ctx.var(self.b));
        ctx.g.push_scope(&self.scope);
        let y = ctx.g.conv2d(x, w, b, self.stride, self.pad);
        ctx.g.pop_scope();
        y
    }

    pub fn param_count(&self) -> usize {
        self.cout * (self.cin * self.k * self.k + 1)
    }
}

#[derive(Debug, Clone)]
pub struct NormLayer {
    pub gain: usize,
    pub shift: usize,
    pub mean_buf: usize,
    pub var_buf: usize,
    pub channels: usize,
    pub scope: String,
}

impl NormLayer {
    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let (gain, shift) = (ctx.var(self.gain), ctx.var(self.shift));
        let eps = T::of(NORM_EPS);
        ctx.g.push_scope(&self.scope);
        let out = match ctx.mode {
            Mode::Train => ctx.g.channel_norm_train(x, gain, shift, eps).map(|(y, mean, var)| {
                let [n, _, h, w] = ctx.g.value(x).shape().try_into().unwrap_or([1, 1, 1, 1]);
                ctx.norm_updates.push(NormUpdate {
                    mean_buf: self.mean_buf,
                    var_buf: self.var_buf,
                    mean,
                    var,
                    count: n * h * w,
                });
                y
            }),
            Mode::Infer => {
                let bufs = ctx.store.buffers();
                let (mean, var) = (bufs[self.mean_buf].value.data(), bufs[self.var_buf].value.data());
                ctx.g.channel_norm_fixed(x, gain, shift, mean, var, eps)
            }
        };
        ctx.g.pop_scope();
        out
    }
}

#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub conv1: ConvLayer,
    pub norm1: NormLayer,
    pub conv2: ConvLayer,
    pub norm2: NormLayer,
    pub skip: Option<ConvLayer>,
    pub scope: String,
}

impl ResidualBlock {
    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let h = self.conv1.forward(ctx, x)?;
        let h = self.norm1.forward(ctx, h)?;
        let h = ctx.g.relu(h)?;
        let h = self.conv2.forward(ctx, h)?;
        let h = self.norm2.forward(ctx, h)?;
        let identity = match &self.skip {
            Some(conv) => conv.forward(ctx, x)?,
            None => x,
        };
        ctx.g.push_scope(&self.scope);
        let out = ctx.g.add(h, identity).and_then(|s| ctx.g.relu(s));
        ctx.g.pop_scope();
        out
    }

    pub fn stride(&self) -> usize {
        self.conv1.stride
    }
}

#[derive(Debug, Clone)]
pub struct ConvModule {
    pub conv: ConvLayer,
    pub norm: NormLayer,
    pub scope: String,
}

impl ConvModule {
    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let h = self.conv.forward(ctx, x)?;
        let h = self.norm.forward(ctx, h)?;
        ctx.g.relu(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_names_are_unique_and_prefixed() {
        let mut b = ParamBuilder::<f64>::new(1);
        b.push("stem");
        let blk = b.residual("0", 3, 8, 2).unwrap();
        b.pop();
        let store = b.finish();
        assert!(blk.skip.is_some());
        assert!(store.get("stem.0.conv1.weight").is_some());
        assert!(store.get("stem.0.skip.bias").is_some());
        assert_eq!(store.buffers().len(), 4);
        let expected = 8 * (3 * 9 + 1) + 2 * 8 + 8 * (8 * 9 + 1) + 2 * 8 + 8 * (3 + 1);
        assert_eq!(store.count(), expected);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut b = ParamBuilder::<f32>::new(1);
        b.conv("c", 1, 1, 3, 1).unwrap();
        assert!(b.conv("c", 1, 1, 3, 1).is_err());
    }

    #[test]
    fn init_depends_only_on_seed_and_name() {
        let mut a = ParamBuilder::<f64>::new(9);
        a.conv("x", 2, 2, 3, 1).unwrap();
        a.conv("y", 2, 2, 3, 1).unwrap();
        let mut b = ParamBuilder::<f64>::new(9);
        b.conv("y", 2, 2, 3, 1).unwrap();
        let (a, b) = (a.finish(), b.finish());
        assert_eq!(a.get("y.weight").unwrap().value, b.get("y.weight").unwrap().value);
        assert_ne!(a.get("x.weight").unwrap().value, a.get("y.weight").unwrap().value);
    }

    #[test]
    fn running_stats_use_momentum_and_unbiased_variance() {
        let mut b = ParamBuilder::<f64>::new(0);
        let n = b.norm("n", 1).unwrap();
        let mut store = b.finish();
        store.apply_norm_updates(&[NormUpdate { mean_buf: n.mean_buf, var_buf: n.var_buf, mean: vec![2.0], var: vec![3.0], count: 4 }]);
        assert!((store.buffers()[n.mean_buf].value.data()[0] - 0.2).abs() < 1e-15);
        assert!((store.buffers()[n.var_buf].value.data()[0] - (0.9 + 0.1 * 4.0)).abs() < 1e-15);
    }
}
