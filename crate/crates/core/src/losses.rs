//! Boundary ground truth and the three-term objective
//! `L = L_S + L_BAS + L_B`.
//!
//! * `L_S`: cross-entropy of both semantic heads, summed with equal weight.
//! * `L_B`: binary cross-entropy of the boundary head against the boundary map.
//! * `L_BAS`: cross-entropy of the final semantic head restricted to pixels
//!   whose boundary confidence `sigmoid(b̂)` exceeds `t`.
//!
//! Every term is reduced over valid pixels (labels other than [`IGNORE`]).

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::net::ForwardOutputs;
use crate::tensor::{Real, Tensor};

/// Label value excluded from losses and metrics.
pub const IGNORE: u8 = 255;

/// Integer labels, one per pixel, batch×height×width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    n: usize,
    h: usize,
    w: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(n: usize, h: usize, w: usize, data: Vec<u8>) -> Result<Self> {
        if n * h * w == 0 || data.len() != n * h * w {
            return Err(Error::Contract(format!("label map {n}x{h}x{w} needs {} values, got {}", n * h * w, data.len())));
        }
        Ok(LabelMap { n, h, w, data })
    }

    pub fn filled(n: usize, h: usize, w: usize, value: u8) -> Self {
        LabelMap { n, h, w, data: vec![value; n * h * w] }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.h, self.w)
    }

    pub fn batch(&self) -> usize {
        self.n
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn get(&self, b: usize, y: usize, x: usize) -> u8 {
        self.data[(b * self.h + y) * self.w + x]
    }

    /// Checks that only ids below `k` or [`IGNORE`] appear.
    pub fn validate(&self, k: usize) -> Result<()> {
        match self.data.iter().find(|&&v| v != IGNORE && v as usize >= k) {
            Some(v) => Err(Error::Contract(format!("label id {v} is not a class of a {k}-class scheme"))),
            None => Ok(()),
        }
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != IGNORE).count()
    }

    /// One image of the batch.
    pub fn sample(&self, b: usize) -> LabelMap {
        let hw = self.h * self.w;
        LabelMap { n: 1, h: self.h, w: self.w, data: self.data[b * hw..(b + 1) * hw].to_vec() }
    }

    /// Stacks single images into a batch.
    pub fn stack(maps: &[LabelMap]) -> Result<LabelMap> {
        let first = maps.first().ok_or_else(|| Error::Contract("cannot stack zero label maps".into()))?;
        let mut data = Vec::with_capacity(maps.len() * first.data.len());
        let mut n = 0;
        for m in maps {
            if (m.h, m.w) != (first.h, first.w) {
                return Err(Error::Contract(format!("label maps {}x{} and {}x{} cannot be stacked", first.h, first.w, m.h, m.w)));
            }
            data.extend_from_slice(&m.data);
            n += m.n;
        }
        LabelMap::new(n, first.h, first.w, data)
    }
}

/// Binary boundary targets, batch×height×width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryMap {
    n: usize,
    h: usize,
    w: usize,
    data: Vec<u8>,
}

impl BoundaryMap {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.h, self.w)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, b: usize, y: usize, x: usize) -> u8 {
        self.data[(b * self.h + y) * self.w + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryMode {
    /// A pixel is on the boundary when a 4-neighbour holds a different valid class.
    #[default]
    Transition,
    /// Canny edges of the label image viewed as grayscale.
    Canny,
}

impl std::str::FromStr for BoundaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transition" => Ok(BoundaryMode::Transition),
            "canny" => Ok(BoundaryMode::Canny),
            _ => Err(Error::Config(format!("unknown boundary mode '{s}' (transition, canny)"))),
        }
    }
}

impl BoundaryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryMode::Transition => "transition",
            BoundaryMode::Canny => "canny",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    Sum,
    /// Divide by the number of contributing pixels.
    #[default]
    Mean,
}

impl std::str::FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Reduction::Sum),
            "mean" => Ok(Reduction::Mean),
            _ => Err(Error::Config(format!("unknown reduction '{s}' (sum, mean)"))),
        }
    }
}

impl Reduction {
    pub fn as_str(self) -> &'static str {
        match self {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Boundary confidence threshold of the BAS term.
    pub t: f64,
    pub clip_eps: f64,
    pub reduction: Reduction,
    pub boundary_mode: BoundaryMode,
    pub dilate_radius: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { t: 0.8, clip_eps: 1e-7, reduction: Reduction::Mean, boundary_mode: BoundaryMode::Transition, dilate_radius: 1 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0 && self.t < 1.0) {
            return Err(Error::Config(format!("loss.t must lie in (0, 1), got {}", self.t)));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 0.5) {
            return Err(Error::Config(format!("loss.clip_eps must lie in (0, 0.5), got {}", self.clip_eps)));
        }
        Ok(())
    }
}

pub fn boundary_gt(labels: &LabelMap, mode: BoundaryMode, dilate_radius: usize) -> BoundaryMap {
    let (n, h, w) = labels.dims();
    let mut data = Vec::with_capacity(n * h * w);
    for b in 0..n {
        let img = &labels.data[b * h * w..(b + 1) * h * w];
        let edges = match mode {
            BoundaryMode::Transition => transitions(img, h, w),
            BoundaryMode::Canny => canny(img, h, w),
        };
        data.extend(dilate(&edges, h, w, dilate_radius));
    }
    BoundaryMap { n, h, w, data }
}

fn transitions(img: &[u8], h: usize, w: usize) -> Vec<u8> {
    let mut out = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            let v = img[y * w + x];
            if v == IGNORE {
                continue;
            }
            let differs = |yy: usize, xx: usize| {
                let u = img[yy * w + xx];
                u != IGNORE && u != v
            };
            let hit = (y > 0 && differs(y - 1, x))
                || (y + 1 < h && differs(y + 1, x))
                || (x > 0 && differs(y, x - 1))
                || (x + 1 < w && differs(y, x + 1));
            out[y * w + x] = hit as u8;
        }
    }
    out
}

fn dilate(edges: &[u8], h: usize, w: usize, r: usize) -> Vec<u8> {
    if r == 0 {
        return edges.to_vec();
    }
    // separable: rows then columns
    let mut tmp = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            tmp[y * w + x] = edges[y * w + lo..=y * w + hi].iter().any(|&v| v != 0) as u8;
        }
    }
    let mut out = vec![0u8; h * w];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).any(|yy| tmp[yy * w + x] != 0) as u8;
        }
    }
    out
}

/// Replicate-border 2-D correlation with a square kernel.
fn filter(img: &[f64], h: usize, w: usize, kernel: &[f64], k: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for ky in 0..k {
                let yy = clamp(y as isize + ky as isize - r, h);
                for kx in 0..k {
                    let xx = clamp(x as isize + kx as isize - r, w);
                    acc += kernel[ky * k + kx] * img[yy * w + xx];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn canny(img: &[u8], h: usize, w: usize) -> Vec<u8> {
    const LOW: f64 = 0.1;
    const HIGH: f64 = 0.2;
    // gradient magnitudes below this are rounding residue of flat regions
    const FLAT: f64 = 1e-9;
    let max_id = img.iter().filter(|&&v| v != IGNORE).max().copied().unwrap_or(0).max(1) as f64;
    let gray: Vec<f64> = img.iter().map(|&v| if v == IGNORE { 0.0 } else { v as f64 / max_id }).collect();

    let g1: Vec<f64> = (-2..=2).map(|i: i32| (-(i * i) as f64 / 2.0).exp()).collect();
    let norm: f64 = g1.iter().sum::<f64>().powi(2);
    let gauss: Vec<f64> = (0..25).map(|i| g1[i / 5] * g1[i % 5] / norm).collect();
    let smooth = filter(&gray, h, w, &gauss, 5);
    let gx = filter(&smooth, h, w, &[-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0], 3);
    let gy = filter(&smooth, h, w, &[-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0], 3);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();

    let mut thin = vec![0.0; h * w];
    let at = |y: isize, x: isize| {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    for y in 0..h {
        for x in 0..w {
            let m = mag[y * w + x];
            if m < FLAT {
                continue;
            }
            let angle = gy[y * w + x].atan2(gx[y * w + x]).to_degrees().rem_euclid(180.0);
            let (dy, dx) = if !(22.5..157.5).contains(&angle) {
                (0, 1)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (1, 0)
            } else {
                (1, -1)
            };
            let (yi, xi) = (y as isize, x as isize);
            if m >= at(yi + dy, xi + dx) && m >= at(yi - dy, xi - dx) {
                thin[y * w + x] = m;
            }
        }
    }

    let peak = thin.iter().cloned().fold(0.0, f64::max);
    let mut out = vec![0u8; h * w];
    if peak == 0.0 {
        return out;
    }
    let (lo, hi) = (LOW * peak, HIGH * peak);
    let mut stack: Vec<usize> = (0..h * w).filter(|&i| thin[i] >= hi).collect();
    for &i in &stack {
        out[i] = 1;
    }
    while let Some(i) = stack.pop() {
        let (y, x) = ((i / w) as isize, (i % w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (yy, xx) = (y + dy, x + dx);
                if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                    continue;
                }
                let j = yy as usize * w + xx as usize;
                if out[j] == 0 && thin[j] >= lo {
                    out[j] = 1;
                    stack.push(j);
                }
            }
        }
    }
    out
}

fn check_spatial(what: &str, shape: &[usize], labels: (usize, usize, usize)) -> Result<()> {
    let (n, h, w) = labels;
    if shape.len() != 4 || shape[0] != n || shape[2] != h || shape[3] != w {
        return Err(Error::Contract(format!("{what} of shape {shape:?} does not match labels {n}x{h}x{w}")));
    }
    Ok(())
}

fn denom<T: Real>(reduction: Reduction, count: usize) -> T {
    match reduction {
        Reduction::Sum => T::one(),
        Reduction::Mean => T::of(count as f64),
    }
}

/// Cross-entropy of one semantic head over valid pixels.
pub fn semantic_ce<T: Real>(g: &mut Graph<T>, logits: Var, gt: &LabelMap, reduction: Reduction) -> Result<Var> {
    check_spatial("semantic logits", g.value(logits).shape(), gt.dims())?;
    let weights: Vec<T> = gt.data.iter().map(|&v| if v == IGNORE { T::zero() } else { T::one() }).collect();
    let valid = gt.valid_count();
    if valid == 0 {
        return Err(Error::Data("every pixel is ignored; the semantic loss is undefined".into()));
    }
    g.cross_entropy(logits, &gt.data, weights, denom(reduction, valid))
}

/// `L_S`: both semantic heads with equal weight.
pub fn s_loss_var<T: Real>(g: &mut Graph<T>, s_hat0: Var, s_hat1: Var, gt: &LabelMap, cfg: &LossConfig) -> Result<Var> {
    let a = semantic_ce(g, s_hat0, gt, cfg.reduction)?;
    let b = semantic_ce(g, s_hat1, gt, cfg.reduction)?;
    g.add(a, b)
}

/// `L_B` with an optional label map whose ignore pixels are excluded.
pub fn b_loss_var<T: Real>(g: &mut Graph<T>, b_hat: Var, b_gt: &BoundaryMap, valid: Option<&LabelMap>, cfg: &LossConfig) -> Result<Var> {
    check_spatial("boundary logits", g.value(b_hat).shape(), b_gt.dims())?;
    if g.value(b_hat).shape()[1] != 1 {
        return Err(Error::Contract(format!("boundary logits need one channel, got {:?}", g.value(b_hat).shape())));
    }
    let weights: Vec<T> = match valid {
        Some(l) => {
            if l.dims() != b_gt.dims() {
                return Err(Error::Contract("boundary map and labels differ in size".into()));
            }
            l.data.iter().map(|&v| if v == IGNORE { T::zero() } else { T::one() }).collect()
        }
        None => vec![T::one(); b_gt.data.len()],
    };
    let count = weights.iter().filter(|&&v| v != T::zero()).count();
    if count == 0 {
        return Err(Error::Data("every pixel is ignored; the boundary loss is undefined".into()));
    }
    let targets = b_gt.data.iter().map(|&v| if v != 0 { T::one() } else { T::zero() }).collect();
    g.binary_cross_entropy(b_hat, targets, weights, T::of(cfg.clip_eps), denom(cfg.reduction, count))
}

/// `L_BAS`: semantic cross-entropy of `s_hat1` where `sigmoid(b_hat) > t`.
/// The mask is not differentiated; an empty mask gives exactly zero.
pub fn bas_loss_var<T: Real>(g: &mut Graph<T>, s_hat1: Var, b_hat: Var, gt: &LabelMap, cfg: &LossConfig) -> Result<Var> {
    check_spatial("semantic logits", g.value(s_hat1).shape(), gt.dims())?;
    check_spatial("boundary logits", g.value(b_hat).shape(), gt.dims())?;
    let t = T::of(cfg.t);
    let weights: Vec<T> = g
        .value(b_hat)
        .data()
        .iter()
        .zip(&gt.data)
        .map(|(&z, &l)| if l != IGNORE && crate::autodiff::sigmoid(z) > t { T::one() } else { T::zero() })
        .collect();
    let count = weights.iter().filter(|&&v| v != T::zero()).count();
    if count == 0 {
        return Ok(g.constant(Tensor::scalar(T::zero())));
    }
    g.cross_entropy(s_hat1, &gt.data, weights, denom(cfg.reduction, count))
}

/// Graph handles of every loss term.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub s: Var,
    pub b: Var,
    pub bas: Var,
    pub total: Var,
}

/// Loss values for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub s: f64,
    pub b: f64,
    pub bas: f64,
    pub total: f64,
}

impl LossVars {
    pub fn values<T: Real>(&self, g: &Graph<T>) -> LossBreakdown {
        let v = |x: Var| g.value(x).data()[0].f64();
        LossBreakdown { s: v(self.s), b: v(self.b), bas: v(self.bas), total: v(self.total) }
    }
}

/// `L = (L_S + L_BAS) + L_B`, evaluated in that order.
pub fn total_loss_var<T: Real>(
    g: &mut Graph<T>,
    out: &ForwardOutputs,
    gt: &LabelMap,
    b_gt: &BoundaryMap,
    cfg: &LossConfig,
) -> Result<LossVars> {
    let s_hat0 = out.s_hat0.ok_or_else(|| Error::Contract("the training objective needs the auxiliary head output".into()))?;
    let s = s_loss_var(g, s_hat0, out.s_hat1, gt, cfg)?;
    let bas = bas_loss_var(g, out.s_hat1, out.b_hat, gt, cfg)?;
    let b = b_loss_var(g, out.b_hat, b_gt, Some(gt), cfg)?;
    let partial = g.add(s, bas)?;
    let total = g.add(partial, b)?;
    Ok(LossVars { s, b, bas, total })
}

fn scalar_of<T: Real>(build: impl FnOnce(&mut Graph<T>) -> Result<Var>) -> Result<T> {
    let mut g = Graph::new();
    let v = build(&mut g)?;
    Ok(g.value(v).data()[0])
}

/// Value of `L_S` for fixed logits.
pub fn s_loss<T: Real>(s_hat0: &Tensor<T>, s_hat1: &Tensor<T>, gt: &LabelMap, cfg: &LossConfig) -> Result<T> {
    scalar_of(|g| {
        let (a, b) = (g.constant(s_hat0.clone()), g.constant(s_hat1.clone()));
        s_loss_var(g, a, b, gt, cfg)
    })
}

/// Value of `L_B` over every pixel.
pub fn b_loss<T: Real>(b_hat: &Tensor<T>, b_gt: &BoundaryMap, cfg: &LossConfig) -> Result<T> {
    scalar_of(|g| {
        let z = g.constant(b_hat.clone());
        b_loss_var(g, z, b_gt, None, cfg)
    })
}

pub fn bas_loss<T: Real>(s_hat1: &Tensor<T>, b_hat: &Tensor<T>, gt: &LabelMap, cfg: &LossConfig) -> Result<T> {
    scalar_of(|g| {
        let (s, b) = (g.constant(s_hat1.clone()), g.constant(b_hat.clone()));
        bas_loss_var(g, s, b, gt, cfg)
    })
}

/// Value of every term for fixed head outputs.
pub fn total_loss<T: Real>(
    s_hat0: &Tensor<T>,
    s_hat1: &Tensor<T>,
    b_hat: &Tensor<T>,
    gt: &LabelMap,
    b_gt: &BoundaryMap,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    let mut g = Graph::new();
    let out = ForwardOutputs {
        s_hat0: Some(g.constant(s_hat0.clone())),
        s_hat1: g.constant(s_hat1.clone()),
        b_hat: g.constant(b_hat.clone()),
    };
    Ok(total_loss_var(&mut g, &out, gt, b_gt, cfg)?.values(&g))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn halves(h: usize, w: usize, split: usize) -> LabelMap {
        let data = (0..h * w).map(|i| if i / w < split { 1 } else { 0 }).collect();
        LabelMap::new(1, h, w, data).unwrap()
    }

    #[test]
    fn uniform_labels_have_no_boundary() {
        let l = LabelMap::filled(2, 6, 7, 3);
        for mode in [BoundaryMode::Transition, BoundaryMode::Canny] {
            assert_eq!(boundary_gt(&l, mode, 1).count(), 0);
        }
    }

    #[test]
    fn half_planes_give_four_row_band() {
        let b = boundary_gt(&halves(12, 5, 6), BoundaryMode::Transition, 1);
        for y in 0..12 {
            let expect = (4..8).contains(&y) as u8;
            for x in 0..5 {
                assert_eq!(b.get(0, y, x), expect, "row {y}");
            }
        }
    }

    #[test]
    fn canny_finds_the_split() {
        let b = boundary_gt(&halves(16, 16, 8), BoundaryMode::Canny, 0);
        assert!(b.count() > 0);
        for y in [0, 1, 2, 13, 14, 15] {
            assert!((0..16).all(|x| b.get(0, y, x) == 0), "row {y}");
        }
    }

    #[test]
    fn ignore_pixels_do_not_create_transitions() {
        let mut l = LabelMap::filled(1, 4, 4, 2);
        l.data_mut()[5] = IGNORE;
        assert_eq!(boundary_gt(&l, BoundaryMode::Transition, 0).count(), 0);
    }

    #[test]
    fn all_ignored_is_an_error() {
        let gt = LabelMap::filled(1, 2, 2, IGNORE);
        let z = Tensor::<f64>::zeros(&[1, 3, 2, 2]);
        assert!(s_loss(&z, &z, &gt, &LossConfig::default()).is_err());
    }

    #[test]
    fn uniform_logits_give_two_log_k() {
        let gt = LabelMap::new(1, 2, 3, vec![0, 1, 2, 3, 4, IGNORE]).unwrap();
        let z = Tensor::<f64>::zeros(&[1, 5, 2, 3]);
        let v = s_loss(&z, &z, &gt, &LossConfig::default()).unwrap();
        assert!((v - 2.0 * 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sum_reduction_scales_with_pixels() {
        let gt = LabelMap::filled(1, 2, 2, 0);
        let z = Tensor::<f64>::zeros(&[1, 1, 2, 2]);
        let cfg = LossConfig { reduction: Reduction::Sum, ..Default::default() };
        let b = boundary_gt(&gt, BoundaryMode::Transition, 0);
        let v = b_loss(&z, &b, &cfg).unwrap();
        assert!((v - 4.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig { t: 1.0, ..Default::default() }.validate().is_err());
        assert!(LossConfig::default().validate().is_ok());
    }
}
