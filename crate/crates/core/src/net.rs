//! Three-branch segmentation network.
//!
//! ```text
//! image ─ stem ─(RPEM*)─┬─ detail ──(+lat)─ RPEM ─┬─ detail ──(+lat)─┐
//!                       │                         └─ S-Head → ŝ(0)   ├─ gate ─ S-Head → ŝ(1)
//!                       ├─ context ─┬─ context ───┬──────────────────┤
//!                       │           │(lat)        │(lat)             │
//!                       └─ boundary ─(+lat)─ boundary ──(+lat)───────┴─ B-Head → b̂
//! ```
//!
//! Context features are projected with 1×1 convolutions, resized to the
//! branch resolution and added into the detail and boundary paths after each
//! context stage. The final fusion is `g ⊙ detail + (1 − g) ⊙ context` with
//! `g = sigmoid(conv1×1(boundary))`. The starred RPEM at the stem tail works
//! at half resolution and its output is resized back to the stem size.

use crate::autodiff::{Graph, Var};
use crate::encodings::{RpeKind, SineMode};
use crate::error::{Error, Result};
use crate::losses::LabelMap;
use crate::params::{ConvLayer, ConvModule, Ctx, Mode, NormUpdate, ParamBuilder, ParamStore, ResidualBlock};
use crate::rpem::{Rpem, RpemConfig};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RpemSites {
    pub stem_tail: bool,
    pub detail_mid: bool,
}

impl RpemSites {
    pub const ALL: RpemSites = RpemSites { stem_tail: true, detail_mid: true };
    pub const NONE: RpemSites = RpemSites { stem_tail: false, detail_mid: false };

    pub fn parse(s: &str) -> Result<Self> {
        let mut sites = RpemSites::NONE;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "stem_tail" => sites.stem_tail = true,
                "detail_mid" => sites.detail_mid = true,
                "none" => {}
                other => return Err(Error::Config(format!("unknown RPEM site '{other}' (stem_tail, detail_mid)"))),
            }
        }
        Ok(sites)
    }

    pub fn to_config_string(self) -> String {
        match (self.stem_tail, self.detail_mid) {
            (true, true) => "stem_tail,detail_mid".into(),
            (true, false) => "stem_tail".into(),
            (false, true) => "detail_mid".into(),
            (false, false) => "none".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub num_classes: usize,
    pub base_width: usize,
    pub stem_strides: Vec<usize>,
    pub detail_blocks: usize,
    pub context_blocks_per_stage: usize,
    pub boundary_blocks: usize,
    pub rpe_kind: RpeKind,
    pub sine_mode: SineMode,
    pub rpem_sites: RpemSites,
    /// Residual modules inside the detail-branch RPEM.
    pub rpem_blocks: usize,
    /// Residual modules inside the stem-tail RPEM*.
    pub rpem_star_blocks: usize,
    pub per_channel_gate: bool,
    /// Hidden width of every RPEM gate; 0 means the module width.
    pub gate_width: usize,
    /// Hidden width of the semantic heads; 0 means `2C`.
    pub head_width: usize,
    pub noise_seed: u64,
    /// Training crop (height, width).
    pub input_hw: (usize, usize),
}

impl NetworkConfig {
    /// Desk-scale preset.
    pub fn tiny() -> Self {
        NetworkConfig {
            num_classes: 6,
            base_width: 16,
            stem_strides: vec![2, 2],
            detail_blocks: 2,
            context_blocks_per_stage: 1,
            boundary_blocks: 2,
            rpe_kind: RpeKind::Sine,
            sine_mode: SineMode::Standard,
            rpem_sites: RpemSites::ALL,
            rpem_blocks: 2,
            rpem_star_blocks: 1,
            per_channel_gate: false,
            gate_width: 0,
            head_width: 0,
            noise_seed: 0,
            input_hw: (64, 96),
        }
    }

    /// Four stride-2 stem modules, base width 32, 536×960 crops.
    pub fn paper() -> Self {
        NetworkConfig {
            base_width: 32,
            stem_strides: vec![2, 2, 2, 2],
            detail_blocks: 6,
            context_blocks_per_stage: 3,
            boundary_blocks: 3,
            gate_width: 16,
            head_width: 128,
            input_hw: (536, 960),
            ..Self::tiny()
        }
    }

    /// Output channels of each stem module: the first half at `C`, the rest at `2C`.
    pub fn stem_channels(&self) -> Vec<usize> {
        let half = self.stem_strides.len() / 2;
        (0..self.stem_strides.len())
            .map(|i| if i < half { self.base_width } else { 2 * self.base_width })
            .collect()
    }

    pub fn detail_width(&self) -> usize {
        2 * self.base_width
    }

    pub fn s_head_width(&self) -> usize {
        if self.head_width == 0 {
            self.detail_width()
        } else {
            self.head_width
        }
    }

    pub fn boundary_width(&self) -> usize {
        self.base_width
    }

    pub fn context_widths(&self) -> [usize; 2] {
        [4 * self.base_width, 8 * self.base_width]
    }

    /// Blocks before the mid point of a branch.
    pub fn first_half(blocks: usize) -> usize {
        blocks.div_ceil(2)
    }

    /// Spatial size after the stem for an `h × w` input.
    pub fn stem_output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        self.stem_strides
            .iter()
            .fold((h, w), |(h, w), &s| (conv_out(h, 3, s, 1), conv_out(w, 3, s, 1)))
    }

    /// Input sizes that are multiples of this keep every stage aligned
    /// (the stem output is then divisible by four).
    pub fn size_multiple(&self) -> usize {
        self.stem_strides.iter().product::<usize>() * 4
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.num_classes > 255 {
            return Err(Error::Config(format!("num_classes must lie in [2, 255], got {}", self.num_classes)));
        }
        if self.base_width == 0 {
            return Err(Error::Config("base_width must be positive".into()));
        }
        if self.stem_strides.is_empty() || self.stem_strides.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!("stem_strides must be a non-empty list of positive strides, got {:?}", self.stem_strides)));
        }
        if self.detail_blocks == 0 || self.context_blocks_per_stage == 0 || self.boundary_blocks == 0 {
            return Err(Error::Config("detail, context and boundary block counts must be positive".into()));
        }
        if self.rpem_blocks == 0 || self.rpem_star_blocks == 0 {
            return Err(Error::Config("RPEM block counts must be positive".into()));
        }
        self.check_input(self.input_hw.0, self.input_hw.1)
    }

    /// Spatial constraints: the stem output must be at least 4×4 and, with an
    /// RPEM* at the stem tail, even in both dimensions.
    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let (sh, sw) = self.stem_output_hw(h, w);
        let needs_even = self.rpem_sites.stem_tail;
        if sh < 4 || sw < 4 || (needs_even && (sh % 2 != 0 || sw % 2 != 0)) {
            return Err(Error::Config(format!(
                "input {h}x{w} gives a {sh}x{sw} stem output; it must be at least 4x4{} \
                 (inputs divisible by {} always work)",
                if needs_even { " and even, since the RPEM* halves it" } else { "" },
                self.size_multiple()
            )));
        }
        Ok(())
    }
}

fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

/// conv3×3 → norm → relu → conv1×1, resized to the input resolution by the caller.
#[derive(Debug, Clone)]
pub struct Head {
    pub body: ConvModule,
    pub out: ConvLayer,
}

impl Head {
    fn build<T: Real>(b: &mut ParamBuilder<T>, name: &str, cin: usize, width: usize, cout: usize) -> Result<Self> {
        b.push(name);
        let body = b.conv_module("body", cin, width)?;
        let out = b.conv("out", width, cout, 1, 1)?;
        b.pop();
        Ok(Head { body, out })
    }

    fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var, hw: (usize, usize)) -> Result<Var> {
        let h = self.body.forward(ctx, x)?;
        let h = self.out.forward(ctx, h)?;
        ctx.g.bilinear_resize(h, hw.0, hw.1)
    }
}

/// Network topology; parameter values live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Network {
    pub cfg: NetworkConfig,
    pub stem: Vec<ResidualBlock>,
    pub stem_rpem: Option<Rpem>,
    pub detail_a: Vec<ResidualBlock>,
    pub detail_rpem: Option<Rpem>,
    pub detail_b: Vec<ResidualBlock>,
    pub context: [Vec<ResidualBlock>; 2],
    pub boundary_a: Vec<ResidualBlock>,
    pub boundary_b: Vec<ResidualBlock>,
    /// 1×1 projections of context stage s into the detail and boundary paths.
    pub lateral_detail: [ConvLayer; 2],
    pub lateral_boundary: [ConvLayer; 2],
    pub fuse_gate: ConvLayer,
    pub s_head0: Head,
    pub s_head1: Head,
    pub b_head: Head,
}

#[derive(Debug, Clone)]
pub struct NetworkParams<T> {
    pub net: Network,
    pub store: ParamStore<T>,
}

/// Head outputs on the graph, all at the input resolution.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOutputs {
    /// Auxiliary semantic logits; absent in inference mode.
    pub s_hat0: Option<Var>,
    pub s_hat1: Var,
    /// Boundary logits (sigmoid applied by the loss and at inference).
    pub b_hat: Var,
}

fn blocks<T: Real>(
    b: &mut ParamBuilder<T>,
    prefix: &str,
    range: std::ops::Range<usize>,
    mut plan: impl FnMut(usize) -> (usize, usize, usize),
) -> Result<Vec<ResidualBlock>> {
    range
        .map(|i| {
            let (cin, cout, stride) = plan(i);
            b.residual(&format!("{prefix}.{i}"), cin, cout, stride)
        })
        .collect()
}

/// Deterministic He-normal initialization derived from `seed`.
pub fn build_network<T: Real>(cfg: &NetworkConfig, seed: u64) -> Result<NetworkParams<T>> {
    cfg.validate()?;
    let mut b = ParamBuilder::<T>::new(seed);
    let stem_ch = cfg.stem_channels();
    let stem = blocks(&mut b, "stem", 0..stem_ch.len(), |i| {
        (if i == 0 { 3 } else { stem_ch[i - 1] }, stem_ch[i], cfg.stem_strides[i])
    })?;
    let stem_out = *stem_ch.last().expect("validated non-empty");

    let rpem_cfg = |cin, cout, n, star| RpemConfig {
        sine_mode: cfg.sine_mode,
        noise_seed: cfg.noise_seed,
        per_channel_gate: cfg.per_channel_gate,
        gate_width: cfg.gate_width,
        ..RpemConfig::new(cin, cout, n, star, cfg.rpe_kind)
    };
    let stem_rpem = if cfg.rpem_sites.stem_tail {
        Some(Rpem::build(&mut b, "stem_rpem", rpem_cfg(stem_out, stem_out, cfg.rpem_star_blocks, true))?)
    } else {
        None
    };

    let dw = cfg.detail_width();
    let split = NetworkConfig::first_half(cfg.detail_blocks);
    let detail_a = blocks(&mut b, "detail", 0..split, |i| (if i == 0 { stem_out } else { dw }, dw, 1))?;
    let detail_rpem = if cfg.rpem_sites.detail_mid {
        let cin = if split == 0 { stem_out } else { dw };
        Some(Rpem::build(&mut b, "detail_rpem", rpem_cfg(cin, dw, cfg.rpem_blocks, false))?)
    } else {
        None
    };
    let detail_b = blocks(&mut b, "detail", split..cfg.detail_blocks, |_| (dw, dw, 1))?;

    let [cw1, cw2] = cfg.context_widths();
    let n = cfg.context_blocks_per_stage;
    let ctx1 = blocks(&mut b, "context1", 0..n, |i| if i == 0 { (stem_out, cw1, 2) } else { (cw1, cw1, 1) })?;
    let ctx2 = blocks(&mut b, "context2", 0..n, |i| if i == 0 { (cw1, cw2, 2) } else { (cw2, cw2, 1) })?;

    let bw = cfg.boundary_width();
    let bsplit = NetworkConfig::first_half(cfg.boundary_blocks);
    let boundary_a = blocks(&mut b, "boundary", 0..bsplit, |i| (if i == 0 { stem_out } else { bw }, bw, 1))?;
    let boundary_b = blocks(&mut b, "boundary", bsplit..cfg.boundary_blocks, |_| (bw, bw, 1))?;

    let lateral_detail = [b.conv("lateral1_detail", cw1, dw, 1, 1)?, b.conv("lateral2_detail", cw2, dw, 1, 1)?];
    let lateral_boundary = [b.conv("lateral1_boundary", cw1, bw, 1, 1)?, b.conv("lateral2_boundary", cw2, bw, 1, 1)?];
    let fuse_gate = b.conv("fuse_gate", bw, 1, 1, 1)?;
    let k = cfg.num_classes;
    let hw = cfg.s_head_width();
    let s_head0 = Head::build(&mut b, "s_head0", dw, hw, k)?;
    let s_head1 = Head::build(&mut b, "s_head1", dw, hw, k)?;
    let b_head = Head::build(&mut b, "b_head", bw, bw, 1)?;

    let net = Network {
        cfg: cfg.clone(),
        stem,
        stem_rpem,
        detail_a,
        detail_rpem,
        detail_b,
        context: [ctx1, ctx2],
        boundary_a,
        boundary_b,
        lateral_detail,
        lateral_boundary,
        fuse_gate,
        s_head0,
        s_head1,
        b_head,
    };
    Ok(NetworkParams { net, store: b.finish() })
}

fn run<T: Real>(ctx: &mut Ctx<'_, T>, blocks: &[ResidualBlock], mut x: Var) -> Result<Var> {
    for b in blocks {
        x = b.forward(ctx, x)?;
    }
    Ok(x)
}

impl Network {
    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<ForwardOutputs> {
        let [_, c, h, w] = ctx.g.value(x).dims4()?;
        if c != 3 {
            return Err(Error::Contract(format!("network input must have 3 channels, got {c}")));
        }
        self.cfg.check_input(h, w)?;
        let mode = ctx.mode;

        let mut s = run(ctx, &self.stem, x)?;
        if let Some(rpem) = &self.stem_rpem {
            let [_, _, sh, sw] = ctx.g.value(s).dims4()?;
            let r = rpem.forward(ctx, s)?;
            s = ctx.g.bilinear_resize(r, sh, sw)?;
        }
        let [_, _, bh, bw] = ctx.g.value(s).dims4()?;

        let mut d = run(ctx, &self.detail_a, s)?;
        let mut bnd = run(ctx, &self.boundary_a, s)?;
        let c1 = run(ctx, &self.context[0], s)?;
        let ld = self.lateral(ctx, &self.lateral_detail[0], c1, bh, bw)?;
        d = ctx.g.add(d, ld)?;
        let lb = self.lateral(ctx, &self.lateral_boundary[0], c1, bh, bw)?;
        bnd = ctx.g.add(bnd, lb)?;
        if let Some(rpem) = &self.detail_rpem {
            d = rpem.forward(ctx, d)?;
        }
        let d_mid = d;

        let d = run(ctx, &self.detail_b, d)?;
        let bnd = run(ctx, &self.boundary_b, bnd)?;
        let c2 = run(ctx, &self.context[1], c1)?;
        let ctx_up = self.lateral(ctx, &self.lateral_detail[1], c2, bh, bw)?;
        let d = ctx.g.add(d, ctx_up)?;
        let lb = self.lateral(ctx, &self.lateral_boundary[1], c2, bh, bw)?;
        let bnd = ctx.g.add(bnd, lb)?;

        let gate = self.fuse_gate.forward(ctx, bnd)?;
        ctx.g.push_scope("fuse");
        let fused = (|| {
            let gate = ctx.g.sigmoid(gate)?;
            let keep = ctx.g.affine(gate, -T::one(), T::one())?;
            ctx.g.broadcast_mul_add(gate, d, keep, ctx_up)
        })();
        ctx.g.pop_scope();
        let fused = fused?;

        let s_hat1 = self.s_head1.forward(ctx, fused, (h, w))?;
        let s_hat0 = match mode {
            Mode::Train => Some(self.s_head0.forward(ctx, d_mid, (h, w))?),
            Mode::Infer => None,
        };
        let b_hat = self.b_head.forward(ctx, bnd, (h, w))?;
        Ok(ForwardOutputs { s_hat0, s_hat1, b_hat })
    }

    fn lateral<T: Real>(&self, ctx: &mut Ctx<'_, T>, proj: &ConvLayer, x: Var, h: usize, w: usize) -> Result<Var> {
        let p = proj.forward(ctx, x)?;
        ctx.g.bilinear_resize(p, h, w)
    }

    /// Every RPEM in the network, with its site name.
    pub fn rpems(&self) -> Vec<(&'static str, &Rpem)> {
        let mut out = Vec::new();
        if let Some(r) = &self.stem_rpem {
            out.push(("stem_tail", r));
        }
        if let Some(r) = &self.detail_rpem {
            out.push(("detail_mid", r));
        }
        out
    }
}

/// Head outputs as tensors.
#[derive(Debug, Clone)]
pub struct ForwardTensors<T> {
    pub s_hat0: Option<Tensor<T>>,
    pub s_hat1: Tensor<T>,
    pub b_hat: Tensor<T>,
}

impl<T: Real> NetworkParams<T> {
    /// Runs a forward pass on a fresh graph and returns the head outputs and,
    /// in training mode, the batch statistics of every norm layer.
    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<(ForwardTensors<T>, Vec<NormUpdate<T>>)> {
        let mut g = Graph::new();
        let mut ctx = Ctx::new(&mut g, &self.store, mode);
        let xv = ctx.g.constant(x.clone());
        let out = self.net.forward(&mut ctx, xv)?;
        let updates = std::mem::take(&mut ctx.norm_updates);
        let tensors = ForwardTensors {
            s_hat0: out.s_hat0.map(|v| g.value(v).clone()),
            s_hat1: g.value(out.s_hat1).clone(),
            b_hat: g.value(out.b_hat).clone(),
        };
        Ok((tensors, updates))
    }

    /// Argmax class per pixel of the final semantic head (inference mode).
    pub fn predict_labels(&self, x: &Tensor<T>) -> Result<LabelMap> {
        let (out, _) = self.forward(x, Mode::Infer)?;
        predict_labels(&out.s_hat1)
    }

    pub fn param_count(&self) -> usize {
        self.store.count()
    }
}

/// Per-pixel argmax over the channel axis; ties go to the lower class index.
pub fn predict_labels<T: Real>(logits: &Tensor<T>) -> Result<LabelMap> {
    let [n, k, h, w] = logits.dims4()?;
    if k > 255 {
        return Err(Error::Contract(format!("{k} classes do not fit a label map")));
    }
    let hw = h * w;
    let d = logits.data();
    let mut labels = vec![0u8; n * hw];
    for b in 0..n {
        for p in 0..hw {
            let mut best = 0;
            let mut best_v = d[b * k * hw + p];
            for c in 1..k {
                let v = d[(b * k + c) * hw + p];
                if v > best_v {
                    best = c;
                    best_v = v;
                }
            }
            labels[b * hw + p] = best as u8;
        }
    }
    LabelMap::new(n, h, w, labels)
}

/// Softmax probability of one class per pixel, e.g. the sea confidence.
pub fn softmax_channel<T: Real>(logits: &Tensor<T>, class: usize) -> Result<Tensor<T>> {
    let [n, k, h, w] = logits.dims4()?;
    if class >= k {
        return Err(Error::Contract(format!("class {class} out of range for {k} channels")));
    }
    let hw = h * w;
    let d = logits.data();
    let mut out = vec![T::zero(); n * hw];
    for b in 0..n {
        for p in 0..hw {
            let mx = (0..k).map(|c| d[(b * k + c) * hw + p]).fold(T::neg_infinity(), T::max);
            let se: T = (0..k).map(|c| (d[(b * k + c) * hw + p] - mx).exp()).sum();
            out[b * hw + p] = (d[(b * k + class) * hw + p] - mx).exp() / se;
        }
    }
    Tensor::new(&[n, 1, h, w], out)
}
