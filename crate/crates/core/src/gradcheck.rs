//! Central finite-difference verification of tape gradients (double precision).

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::{Ctx, Mode, ParamStore};
use crate::rng;
use crate::tensor::Tensor;

/// Elements checked per tensor when it is too large to check exhaustively.
pub const SUBSAMPLE: usize = 64;

/// Denominator floor of the relative error: gradients smaller than this are
/// compared absolutely, since exact zeros (a conv bias cancelled by the norm
/// after it) only show finite-difference round-off.
pub const REL_FLOOR: f64 = 1e-6;

/// Entries whose error exceeds this are probed again at `eps / 10`.
pub const RETRY_ABOVE: f64 = 1e-4;

/// Two central differences further apart than this (and than 1e-3 of their
/// size) mean a ReLU kink lies within the step; round-off stays far below it.
pub const KINK_ABS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    /// Entries judged to straddle a kink and scored at the smaller step.
    pub kinks: usize,
    pub max_rel_err: f64,
    /// Element with the largest error and its analytic/numeric values.
    pub worst: (usize, f64, f64),
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params.iter().max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }

    pub fn checked(&self) -> usize {
        self.params.iter().map(|p| p.checked).sum()
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Indices to probe: all of them for small tensors, otherwise a seeded sample
/// of [`SUBSAMPLE`] distinct elements.
fn probe_indices(numel: usize, seed: u64, name: &str) -> Vec<usize> {
    if numel <= SUBSAMPLE {
        return (0..numel).collect();
    }
    let mut idx = rng::permutation(&mut rng::stream(seed, &format!("gradcheck:{name}")), numel);
    idx.truncate(SUBSAMPLE);
    idx.sort_unstable();
    idx
}

/// Compares tape gradients of the scalar `f` against central differences
/// `(f(p + eps) − f(p − eps)) / 2eps` for each named parameter.
///
/// `f` receives a fresh graph and the leaf handle of every parameter, in order.
/// An entry that misses by more than [`RETRY_ABOVE`] is differenced again at
/// `eps / 10`; if the two differences disagree the smaller step is scored.
pub fn grad_check<F>(params: &[(String, Tensor<f64>)], eps: f64, seed: u64, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(Error::Config(format!("grad_check eps must lie in [1e-6, 1e-3], got {eps}")));
    }
    let mut eval = |values: &[Tensor<f64>]| -> Result<(Graph<f64>, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.param(t.clone())).collect();
        let loss = f(&mut g, &vars)?;
        Ok((g, vars, loss))
    };

    let mut values: Vec<Tensor<f64>> = params.iter().map(|(_, t)| t.clone()).collect();
    let (g, vars, loss) = eval(&values)?;
    let grads = g.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(&values)
        .map(|(&v, t)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    drop(g);

    let mut report = GradCheckReport { params: Vec::with_capacity(params.len()) };
    for (pi, (name, tensor)) in params.iter().enumerate() {
        let mut check = ParamCheck { name: name.clone(), checked: 0, kinks: 0, max_rel_err: 0.0, worst: (0, 0.0, 0.0) };
        for i in probe_indices(tensor.numel(), seed, name) {
            let mut central = |h: f64| -> Result<f64> {
                let orig = values[pi].data()[i];
                values[pi].data_mut()[i] = orig + h;
                let (gp, _, lp) = eval(&values)?;
                let plus = gp.value(lp).data()[0];
                drop(gp);
                values[pi].data_mut()[i] = orig - h;
                let (gm, _, lm) = eval(&values)?;
                let minus = gm.value(lm).data()[0];
                values[pi].data_mut()[i] = orig;
                Ok((plus - minus) / (2.0 * h))
            };

            let a = analytic[pi].data()[i];
            let mut numeric = central(eps)?;
            let mut err = rel_err(a, numeric);
            if err > RETRY_ABOVE {
                let fine = central(eps / 10.0)?;
                if (fine - numeric).abs() > KINK_ABS.max(1e-3 * fine.abs().max(numeric.abs())) {
                    numeric = fine;
                    err = rel_err(a, fine);
                    check.kinks += 1;
                }
            }
            if !err.is_finite() {
                return Err(Error::numeric(format!("{name}[{i}]"), "finite difference is not finite"));
            }
            if err > check.max_rel_err || check.checked == 0 {
                check.max_rel_err = err;
                check.worst = (i, a, numeric);
            }
            check.checked += 1;
        }
        report.params.push(check);
    }
    Ok(report)
}

/// [`grad_check`] over every parameter of a store, with the forward written
/// against a [`Ctx`].
pub fn grad_check_store<F>(store: &ParamStore<f64>, mode: Mode, eps: f64, seed: u64, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Ctx<'_, f64>) -> Result<Var>,
{
    let params: Vec<(String, Tensor<f64>)> =
        store.params().iter().map(|p| (p.name.clone(), p.value.clone())).collect();
    grad_check(&params, eps, seed, |g, vars| {
        let mut ctx = Ctx::with_vars(g, store, vars.to_vec(), mode);
        f(&mut ctx)
    })
}

/// Pass bar of every suite case.
pub const SUITE_TOL: f64 = 1e-3;

/// Finite-difference step of the suite.
pub const SUITE_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct SuiteCase {
    pub name: String,
    pub report: GradCheckReport,
}

impl SuiteCase {
    pub fn passed(&self) -> bool {
        self.report.max_rel_err() < SUITE_TOL
    }
}

fn normals(shape: &[usize], seed: u64, label: &str) -> Tensor<f64> {
    let draws = rng::normals(&mut rng::stream(seed, label), shape.iter().product());
    Tensor::new(shape, draws).expect("shape matches draw count")
}

/// Normals pushed at least `gap` away from zero, so no kink sits within a step.
fn off_zero(shape: &[usize], seed: u64, label: &str, gap: f64) -> Tensor<f64> {
    normals(shape, seed, label).map(|v| v + gap.copysign(v))
}

/// `sum(y ⊙ r)` for a fixed random `r`, so every output element carries a distinct weight.
fn probe_sum(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let r = normals(g.value(y).shape(), seed, "probe");
    let r = g.constant(r);
    let p = g.broadcast_mul(y, r)?;
    g.sum(p)
}

type OpFn = fn(&mut Graph<f64>, &[Var], u64) -> Result<Var>;

fn op_cases(seed: u64) -> Vec<(&'static str, Vec<(String, Tensor<f64>)>, OpFn)> {
    let t = |label: &str, shape: &[usize]| (label.to_string(), normals(shape, seed, label));
    let conv_in = || vec![t("x", &[2, 3, 5, 6]), t("w", &[4, 3, 3, 3]), t("b", &[4])];
    vec![
        ("conv2d k3 s1", conv_in(), |g, v, s| {
            let y = g.conv2d(v[0], v[1], v[2], 1, 1)?;
            probe_sum(g, y, s)
        }),
        ("conv2d k3 s2", conv_in(), |g, v, s| {
            let y = g.conv2d(v[0], v[1], v[2], 2, 1)?;
            probe_sum(g, y, s)
        }),
        ("conv2d k1 s2", vec![t("x", &[1, 3, 5, 4]), t("w", &[2, 3, 1, 1]), t("b", &[2])], |g, v, s| {
            let y = g.conv2d(v[0], v[1], v[2], 2, 0)?;
            probe_sum(g, y, s)
        }),
        ("channel_norm train", vec![t("x", &[2, 3, 4, 5]), t("gain", &[3]), t("shift", &[3])], |g, v, s| {
            let (y, _, _) = g.channel_norm_train(v[0], v[1], v[2], 1e-5)?;
            probe_sum(g, y, s)
        }),
        ("channel_norm fixed", vec![t("x", &[2, 3, 4, 5]), t("gain", &[3]), t("shift", &[3])], |g, v, s| {
            let y = g.channel_norm_fixed(v[0], v[1], v[2], &[0.1, -0.2, 0.3], &[0.5, 1.5, 2.0], 1e-5)?;
            probe_sum(g, y, s)
        }),
        ("relu", vec![("x".into(), off_zero(&[2, 3, 4, 4], seed, "x", 0.05))], |g, v, s| {
            let y = g.relu(v[0])?;
            probe_sum(g, y, s)
        }),
        ("sigmoid", vec![t("x", &[2, 3, 4, 4])], |g, v, s| {
            let y = g.sigmoid(v[0])?;
            probe_sum(g, y, s)
        }),
        ("add", vec![t("a", &[2, 3, 4, 5]), t("b", &[2, 3, 4, 5])], |g, v, s| {
            let y = g.add(v[0], v[1])?;
            probe_sum(g, y, s)
        }),
        ("affine", vec![t("x", &[1, 2, 3, 3])], |g, v, s| {
            let y = g.affine(v[0], -1.5, 0.25)?;
            probe_sum(g, y, s)
        }),
        (
            "broadcast_mul_add",
            vec![t("a", &[2, 1, 4, 5]), t("b", &[2, 3, 4, 5]), t("c", &[2, 1, 4, 5]), t("d", &[1, 3, 4, 1])],
            |g, v, s| {
                let y = g.broadcast_mul_add(v[0], v[1], v[2], v[3])?;
                probe_sum(g, y, s)
            },
        ),
        ("broadcast_mul", vec![t("a", &[2, 3, 4, 5]), t("b", &[1, 3, 4, 1])], |g, v, s| {
            let y = g.broadcast_mul(v[0], v[1])?;
            probe_sum(g, y, s)
        }),
        ("bilinear up", vec![t("x", &[1, 2, 3, 4])], |g, v, s| {
            let y = g.bilinear_resize(v[0], 7, 9)?;
            probe_sum(g, y, s)
        }),
        ("bilinear down", vec![t("x", &[1, 2, 8, 6])], |g, v, s| {
            let y = g.bilinear_resize(v[0], 3, 4)?;
            probe_sum(g, y, s)
        }),
        ("sum", vec![t("x", &[2, 2, 3, 3])], |g, v, _| g.sum(v[0])),
        ("cross_entropy", vec![t("logits", &[2, 4, 3, 3])], |g, v, s| {
            let mut r = rng::stream(s, "targets");
            let n = 2 * 3 * 3;
            let targets: Vec<u8> = (0..n).map(|_| rng::int_inclusive(&mut r, 0, 3) as u8).collect();
            let weights: Vec<f64> = (0..n).map(|i| if i % 5 == 0 { 0.0 } else { 1.0 }).collect();
            let denom = weights.iter().sum();
            g.cross_entropy(v[0], &targets, weights, denom)
        }),
        ("binary_cross_entropy", vec![t("logits", &[2, 1, 4, 4])], |g, v, s| {
            let mut r = rng::stream(s, "targets");
            let targets: Vec<f64> = (0..32).map(|_| if rng::unit(&mut r) < 0.5 { 1.0 } else { 0.0 }).collect();
            let weights: Vec<f64> = (0..32).map(|i| if i % 7 == 0 { 0.0 } else { 1.0 }).collect();
            g.binary_cross_entropy(v[0], targets, weights, 1e-7, 27.0)
        }),
    ]
}

/// Every differentiable tape operation, with respect to all of its inputs.
pub fn op_suite(seed: u64) -> Result<Vec<SuiteCase>> {
    op_cases(seed)
        .into_iter()
        .map(|(name, params, f)| {
            let report = grad_check(&params, SUITE_EPS, seed, |g, v| f(g, v, seed))?;
            Ok(SuiteCase { name: name.into(), report })
        })
        .collect()
}

/// The RPEM block, plain and starred, and with its gate driven to both
/// saturation limits.
pub fn rpem_suite(seed: u64) -> Result<Vec<SuiteCase>> {
    use crate::encodings::RpeKind;
    use crate::rpem::{rpem_init, RpemConfig};

    let mut out = Vec::new();
    let variants: [(&str, bool, Option<f64>); 4] =
        [("rpem", false, None), ("rpem star", true, None), ("rpem gate -> 0", false, Some(-30.0)), ("rpem gate -> 1", false, Some(30.0))];
    for (name, star, bias) in variants {
        let mut p = rpem_init::<f64>(RpemConfig::new(4, 4, 2, star, RpeKind::Sine), seed)?;
        if let Some(b) = bias {
            p.module.set_gate_bias(&mut p.store, b);
        }
        let x = normals(&[2, 4, 6, 4], seed, "rpem input");
        let report = grad_check_store(&p.store, Mode::Train, SUITE_EPS, seed, |ctx| {
            let xv = ctx.g.constant(x.clone());
            let y = p.module.forward(ctx, xv)?;
            probe_sum(ctx.g, y, seed)
        })?;
        out.push(SuiteCase { name: name.into(), report });
    }
    Ok(out)
}

/// Total training loss of a whole network with respect to every parameter.
pub fn network_case(cfg: &crate::net::NetworkConfig, input: [usize; 4], seed: u64) -> Result<SuiteCase> {
    use crate::losses::{boundary_gt, total_loss_var, LabelMap, LossConfig};
    use crate::net::build_network;

    let net = build_network::<f64>(cfg, seed)?;
    let x = normals(&input, seed, "network input");
    let [n, _, h, w] = input;
    let mut r = rng::stream(seed, "network labels");
    // two horizontal bands with a ragged edge give both classes and boundaries
    let labels: Vec<u8> = (0..n * h * w)
        .map(|i| {
            let (y, xx) = ((i / w) % h, i % w);
            let edge = h / 2 + (xx % 3);
            if y + rng::int_inclusive(&mut r, 0, 1) > edge { 1 } else { 0 }
        })
        .collect();
    let gt = LabelMap::new(n, h, w, labels)?;
    let loss_cfg = LossConfig::default();
    let b_gt = boundary_gt(&gt, loss_cfg.boundary_mode, loss_cfg.dilate_radius);
    let report = grad_check_store(&net.store, Mode::Train, SUITE_EPS, seed, |ctx| {
        let xv = ctx.g.constant(x.clone());
        let out = net.net.forward(ctx, xv)?;
        Ok(total_loss_var(ctx.g, &out, &gt, &b_gt, &loss_cfg)?.total)
    })?;
    Ok(SuiteCase { name: format!("network C={} {}x{}", cfg.base_width, h, w), report })
}

/// Network used by the suite: the tiny layout at base width 4.
pub fn suite_network() -> crate::net::NetworkConfig {
    crate::net::NetworkConfig { base_width: 4, num_classes: 2, input_hw: (32, 48), ..crate::net::NetworkConfig::tiny() }
}

/// Ops, RPEM and whole network. `tiny` checks the base-width-4 network;
/// otherwise the tiny preset at its own width.
pub fn run_suite(tiny: bool, seed: u64) -> Result<Vec<SuiteCase>> {
    let mut cases = op_suite(seed)?;
    cases.extend(rpem_suite(seed)?);
    let cfg = if tiny { suite_network() } else { crate::net::NetworkConfig { num_classes: 2, input_hw: (32, 48), ..crate::net::NetworkConfig::tiny() } };
    cases.push(network_case(&cfg, [2, 3, 32, 48], seed)?);
    Ok(cases)
}
