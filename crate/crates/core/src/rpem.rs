//! Row Positional Encoding Module.
//!
//! With `u = f(F_in)` (a stack of residual modules), a single-channel gate
//! `σ = sigmoid(f_σ(u))` mixes the encoding-modulated branch `f_pos(u) ⊙ RPE`
//! with the plain features:
//!
//! ```text
//! F_out = σ ⊙ f_pos(u) ⊙ RPE + (1 − σ) ⊙ u
//! ```
//!
//! The encoding table is rebuilt for the height it meets, so the module runs
//! at any input size. The starred variant downsamples by two in its first
//! residual module and mixes at the reduced size.

use crate::autodiff::Var;
use crate::encodings::{RpeKind, RpeTable, SineMode};
use crate::error::{Error, Result};
use crate::params::{ConvLayer, ConvModule, Ctx, ParamBuilder, ParamStore, ResidualBlock};
use crate::tensor::Real;

/// Scale applied to the He-normal init of the gate's final 1×1 convolution,
/// keeping pre-sigmoid activations near zero so σ starts close to 0.5.
pub const GATE_INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct RpemConfig {
    pub cin: usize,
    pub cout: usize,
    /// Residual modules in `f`.
    pub blocks: usize,
    pub star: bool,
    pub kind: RpeKind,
    pub sine_mode: SineMode,
    pub noise_seed: u64,
    /// One gate per channel instead of one per pixel.
    pub per_channel_gate: bool,
    /// Hidden width of `f_σ`; 0 means `cout`.
    pub gate_width: usize,
}

impl RpemConfig {
    pub fn new(cin: usize, cout: usize, blocks: usize, star: bool, kind: RpeKind) -> Self {
        RpemConfig {
            cin,
            cout,
            blocks,
            star,
            kind,
            sine_mode: SineMode::Standard,
            noise_seed: 0,
            per_channel_gate: false,
            gate_width: 0,
        }
    }

    pub fn gate_hidden(&self) -> usize {
        if self.gate_width == 0 {
            self.cout
        } else {
            self.gate_width
        }
    }

    pub fn gate_channels(&self) -> usize {
        if self.per_channel_gate {
            self.cout
        } else {
            1
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rpem {
    pub cfg: RpemConfig,
    pub f: Vec<ResidualBlock>,
    pub f_sigma: ConvModule,
    pub f_sigma_out: ConvLayer,
    pub f_pos: ConvModule,
    pub scope: String,
}

/// Values produced inside one module evaluation.
#[derive(Debug, Clone, Copy)]
pub struct RpemTrace {
    pub out: Var,
    /// `f(F_in)`
    pub u: Var,
    pub sigma: Var,
    /// `f_pos(u) ⊙ RPE`
    pub pos_rpe: Var,
}

impl Rpem {
    pub fn build<T: Real>(b: &mut ParamBuilder<T>, name: &str, cfg: RpemConfig) -> Result<Self> {
        if cfg.blocks == 0 {
            return Err(Error::Config("an RPEM needs at least one residual module".into()));
        }
        if cfg.kind != RpeKind::Linear && cfg.kind != RpeKind::Noise && cfg.cout % 2 != 0 {
            return Err(Error::Config(format!("sine encodings need an even channel count, got {}", cfg.cout)));
        }
        b.push(name);
        let mut f = Vec::with_capacity(cfg.blocks);
        for i in 0..cfg.blocks {
            let (cin, stride) = if i == 0 { (cfg.cin, if cfg.star { 2 } else { 1 }) } else { (cfg.cout, 1) };
            f.push(b.residual(&format!("f.{i}"), cin, cfg.cout, stride)?);
        }
        let f_sigma = b.conv_module("f_sigma", cfg.cout, cfg.gate_hidden())?;
        let f_sigma_out = b.conv_scaled("f_sigma_out", cfg.gate_hidden(), cfg.gate_channels(), 1, 1, GATE_INIT_SCALE)?;
        let f_pos = b.conv_module("f_pos", cfg.cout, cfg.cout)?;
        let scope = b.scope();
        b.pop();
        Ok(Rpem { cfg, f, f_sigma, f_sigma_out, f_pos, scope })
    }

    /// Output size for an input of `h × w`.
    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        if self.cfg.star {
            (h.div_ceil(2), w.div_ceil(2))
        } else {
            (h, w)
        }
    }

    /// Encoding table this module uses at feature height `m`.
    pub fn table(&self, m: usize) -> Result<RpeTable> {
        RpeTable::build(self.cfg.kind, m, self.cfg.cout, self.cfg.sine_mode, self.cfg.noise_seed)
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        Ok(self.forward_traced(ctx, x, None)?.out)
    }

    /// Forward pass; `table` overrides the module's own encoding.
    pub fn forward_traced<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var, table: Option<&RpeTable>) -> Result<RpemTrace> {
        let [_, c, h, w] = ctx.g.value(x).dims4()?;
        if c != self.cfg.cin {
            return Err(Error::Contract(format!("{} expects {} input channels, got {c}", self.scope, self.cfg.cin)));
        }
        if self.cfg.star && (h % 2 != 0 || w % 2 != 0) {
            return Err(Error::Contract(format!("{} downsamples by two and needs an even input, got {h}x{w}", self.scope)));
        }
        let mut u = x;
        for block in &self.f {
            u = block.forward(ctx, u)?;
        }
        let [_, _, hu, _] = ctx.g.value(u).dims4()?;
        let s = self.f_sigma.forward(ctx, u)?;
        let s = self.f_sigma_out.forward(ctx, s)?;
        ctx.g.push_scope(&self.scope);
        let sigma = ctx.g.sigmoid(s);
        ctx.g.pop_scope();
        let sigma = sigma?;
        let pos = self.f_pos.forward(ctx, u)?;

        let owned;
        let table = match table {
            Some(t) => t,
            None => {
                owned = self.table(hu)?;
                &owned
            }
        };
        if table.rows() != hu {
            return Err(Error::Contract(format!(
                "{}: encoding has {} rows but the feature height is {hu}",
                self.scope,
                table.rows()
            )));
        }
        if table.d_model() != self.cfg.cout {
            return Err(Error::Contract(format!(
                "{}: encoding has {} channels but features have {}",
                self.scope,
                table.d_model(),
                self.cfg.cout
            )));
        }
        ctx.g.push_scope(&self.scope);
        let result = (|| {
            let rpe = ctx.g.constant(table.to_tensor());
            let pos_rpe = ctx.g.broadcast_mul(pos, rpe)?;
            let keep = ctx.g.affine(sigma, -T::one(), T::one())?;
            let out = ctx.g.broadcast_mul_add(sigma, pos_rpe, keep, u)?;
            Ok(RpemTrace { out, u, sigma, pos_rpe })
        })();
        ctx.g.pop_scope();
        result
    }

    /// Trainable scalars, by closed form over the module's layers.
    pub fn param_count(&self) -> usize {
        let block = |b: &ResidualBlock| {
            b.conv1.param_count()
                + b.conv2.param_count()
                + 2 * b.norm1.channels
                + 2 * b.norm2.channels
                + b.skip.as_ref().map_or(0, ConvLayer::param_count)
        };
        self.f.iter().map(block).sum::<usize>()
            + self.f_sigma.conv.param_count()
            + 2 * self.f_sigma.norm.channels
            + self.f_sigma_out.param_count()
            + self.f_pos.conv.param_count()
            + 2 * self.f_pos.norm.channels
    }

    /// Sets every bias of the gate's final convolution (used to drive σ to its limits).
    pub fn set_gate_bias<T: Real>(&self, store: &mut ParamStore<T>, value: T) {
        for v in store.params_mut()[self.f_sigma_out.b].value.data_mut() {
            *v = value;
        }
    }
}

/// A standalone module with its own parameters.
#[derive(Debug, Clone)]
pub struct RpemParams<T> {
    pub module: Rpem,
    pub store: ParamStore<T>,
}

/// He-normal weights, unit gains, zero shifts and biases.
pub fn rpem_init<T: Real>(cfg: RpemConfig, seed: u64) -> Result<RpemParams<T>> {
    let mut b = ParamBuilder::new(seed);
    let module = Rpem::build(&mut b, "rpem", cfg)?;
    Ok(RpemParams { module, store: b.finish() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;
    use crate::params::Mode;
    use crate::tensor::Tensor;

    fn input(shape: &[usize], seed: u64) -> Tensor<f64> {
        let draws = crate::rng::normals(&mut crate::rng::stream(seed, "input"), shape.iter().product());
        Tensor::new(shape, draws).unwrap()
    }

    #[test]
    fn shapes_preserved_or_halved() {
        for star in [false, true] {
            let p = rpem_init::<f64>(RpemConfig::new(4, 6, 2, star, RpeKind::Linear), 3).unwrap();
            let mut g = Graph::new();
            let mut ctx = Ctx::new(&mut g, &p.store, Mode::Train);
            let x = ctx.g.constant(input(&[2, 4, 8, 6], 1));
            let y = p.module.forward(&mut ctx, x).unwrap();
            let expect: &[usize] = if star { &[2, 6, 4, 3] } else { &[2, 6, 8, 6] };
            assert_eq!(g.value(y).shape(), expect);
        }
    }

    #[test]
    fn wrong_table_height_names_both_heights() {
        let p = rpem_init::<f64>(RpemConfig::new(4, 4, 1, false, RpeKind::Linear), 3).unwrap();
        let table = crate::encodings::rpe_linear(5, 4).unwrap();
        let mut g = Graph::new();
        let mut ctx = Ctx::new(&mut g, &p.store, Mode::Train);
        let x = ctx.g.constant(input(&[1, 4, 8, 4], 1));
        let err = p.module.forward_traced(&mut ctx, x, Some(&table)).unwrap_err().to_string();
        assert!(err.contains("5 rows") && err.contains("height is 8"), "{err}");
    }

    #[test]
    fn star_rejects_odd_input() {
        let p = rpem_init::<f64>(RpemConfig::new(2, 2, 1, true, RpeKind::Linear), 3).unwrap();
        let mut g = Graph::new();
        let mut ctx = Ctx::new(&mut g, &p.store, Mode::Train);
        let x = ctx.g.constant(input(&[1, 2, 5, 4], 1));
        assert!(matches!(p.module.forward(&mut ctx, x), Err(Error::Contract(_))));
    }

    #[test]
    fn odd_channels_rejected_for_sine() {
        assert!(rpem_init::<f64>(RpemConfig::new(3, 3, 1, false, RpeKind::Sine), 0).is_err());
        assert!(rpem_init::<f64>(RpemConfig::new(3, 3, 1, false, RpeKind::Linear), 0).is_ok());
    }

    #[test]
    fn per_channel_gate_has_one_map_per_channel() {
        let mut cfg = RpemConfig::new(4, 4, 1, false, RpeKind::Sine);
        cfg.per_channel_gate = true;
        let p = rpem_init::<f64>(cfg, 1).unwrap();
        let mut g = Graph::new();
        let mut ctx = Ctx::new(&mut g, &p.store, Mode::Train);
        let x = ctx.g.constant(input(&[1, 4, 4, 4], 2));
        let tr = p.module.forward_traced(&mut ctx, x, None).unwrap();
        assert_eq!(g.value(tr.sigma).shape(), &[1, 4, 4, 4]);
    }
}
