//! Nested-loop reference implementations shared by the integration tests.
#![allow(dead_code)]

use rowseg::losses::{LabelMap, IGNORE};
use rowseg::rng;
use rowseg::Tensor;

pub fn normals(shape: &[usize], seed: u64, label: &str) -> Tensor<f64> {
    let v = rng::normals(&mut rng::stream(seed, label), shape.iter().product());
    Tensor::new(shape, v).unwrap()
}

/// Direct convolution with zero padding.
pub fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let [n, cin, h, wd] = x.dims4().unwrap();
    let [cout, _, k, _] = w.dims4().unwrap();
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut out = Tensor::zeros(&[n, cout, ho, wo]);
    for bi in 0..n {
        for co in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b.data()[co];
                    for ci in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += w.at4(co, ci, ky, kx) * x.at4(bi, ci, iy as usize, ix as usize);
                            }
                        }
                    }
                    let i = out.idx4(bi, co, oy, ox);
                    out.data_mut()[i] = acc;
                }
            }
        }
    }
    out
}

/// `−log softmax(z)[t]` without the max shift.
fn nll(z: &Tensor<f64>, b: usize, y: usize, x: usize, t: usize) -> f64 {
    let k = z.shape()[1];
    let se: f64 = (0..k).map(|c| z.at4(b, c, y, x).exp()).sum();
    se.ln() - z.at4(b, t, y, x)
}

/// Mean semantic cross-entropy over pixels where `mask` holds and the label is valid.
pub fn ce_oracle(z: &Tensor<f64>, gt: &LabelMap, mask: impl Fn(usize, usize, usize) -> bool) -> Option<f64> {
    let (n, h, w) = gt.dims();
    let (mut sum, mut count) = (0.0, 0usize);
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                let t = gt.get(b, y, x);
                if t == IGNORE || !mask(b, y, x) {
                    continue;
                }
                sum += nll(z, b, y, x, t as usize);
                count += 1;
            }
        }
    }
    (count > 0).then(|| sum / count as f64)
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Mean clipped binary cross-entropy over pixels with a valid label.
pub fn bce_oracle(z: &Tensor<f64>, target: &[u8], gt: &LabelMap, clip: f64) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for (i, (&zv, &t)) in z.data().iter().zip(target).enumerate() {
        if gt.data()[i] == IGNORE {
            continue;
        }
        let p = sigmoid(zv).clamp(clip, 1.0 - clip);
        sum -= if t != 0 { p.ln() } else { (1.0 - p).ln() };
        count += 1;
    }
    sum / count as f64
}

/// Boundary-restricted cross-entropy; zero when no pixel passes the threshold.
pub fn bas_oracle(s: &Tensor<f64>, bz: &Tensor<f64>, gt: &LabelMap, t: f64) -> f64 {
    ce_oracle(s, gt, |b, y, x| sigmoid(bz.at4(b, 0, y, x)) > t).unwrap_or(0.0)
}

/// Random labels in `0..k` with roughly `ignore_frac` ignored.
pub fn random_labels(n: usize, h: usize, w: usize, k: usize, ignore_frac: f64, seed: u64) -> LabelMap {
    let mut r = rng::stream(seed, "labels");
    let data = (0..n * h * w)
        .map(|_| if rng::unit(&mut r) < ignore_frac { IGNORE } else { rng::int_inclusive(&mut r, 0, k - 1) as u8 })
        .collect();
    LabelMap::new(n, h, w, data).unwrap()
}

/// `[pred][gt]` counts by direct tally.
pub fn confusion_oracle(pred: &[u8], gt: &[u8], k: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; k]; k];
    for (&p, &g) in pred.iter().zip(gt) {
        if g != IGNORE {
            m[p as usize][g as usize] += 1;
        }
    }
    m
}

/// Random matrix with a sprinkling of empty rows and columns.
pub fn random_matrix(k: usize, seed: u64) -> Vec<Vec<u64>> {
    let mut r = rng::stream(seed, "matrix");
    let empty = rng::int_inclusive(&mut r, 0, k);
    (0..k)
        .map(|p| {
            (0..k)
                .map(|g| {
                    if p == empty || g == empty {
                        0
                    } else if rng::unit(&mut r) < 0.2 {
                        0
                    } else {
                        rng::int_inclusive(&mut r, 0, 1000) as u64
                    }
                })
                .collect()
        })
        .collect()
}

/// Default synthetic scenes from streams `synth` seeded `0..count`.
pub fn synth_samples(count: u64) -> Vec<rowseg::data::Sample> {
    let cfg = rowseg::data::SynthConfig::default();
    (0..count).map(|i| rowseg::data::synth_scene(&cfg, &mut rng::stream(i, "synth")).unwrap()).collect()
}

/// Tiny config writing its log and checkpoints under `dir`.
pub fn tiny_in(dir: &std::path::Path, iters: usize, interval: usize) -> rowseg::config::Config {
    let mut cfg = rowseg::config::Config::tiny();
    cfg.train.total_iters = iters;
    cfg.train.eval_interval = interval;
    cfg.train.checkpoint = dir.join("model.ckpt");
    cfg.train.log = dir.join("train_log.csv");
    cfg
}

/// Largest deviation of both conv paths from the oracle on one random case.
pub fn conv_case(seed: u64) -> f64 {
    let mut r = rng::stream(seed, "conv-case");
    let n = rng::int_inclusive(&mut r, 1, 2);
    let cin = rng::int_inclusive(&mut r, 1, 4);
    let cout = rng::int_inclusive(&mut r, 1, 4);
    let k = [1, 3, 5][rng::int_inclusive(&mut r, 0, 2)];
    let stride = rng::int_inclusive(&mut r, 1, 3);
    let pad = rng::int_inclusive(&mut r, 0, k / 2 + 1);
    let h = rng::int_inclusive(&mut r, k, 11);
    let w = rng::int_inclusive(&mut r, k, 11);
    let x = normals(&[n, cin, h, w], seed, "x");
    let wt = normals(&[cout, cin, k, k], seed, "w");
    let b = normals(&[cout], seed, "b");
    let want = conv_oracle(&x, &wt, &b, stride, pad);

    let got = rowseg::kernels::conv2d_forward(&x, &wt, &b, stride, pad).unwrap();
    assert_eq!(got.shape(), want.shape(), "case {seed}");
    let mut g = rowseg::Graph::new();
    let (xv, wv, bv) = (g.constant(x), g.constant(wt), g.constant(b));
    let y = g.conv2d(xv, wv, bv, stride, pad).unwrap();
    got.max_abs_diff(&want).max(g.value(y).max_abs_diff(&want))
}

pub struct LossCase {
    pub s0: Tensor<f64>,
    pub s1: Tensor<f64>,
    pub bz: Tensor<f64>,
    pub gt: LabelMap,
    pub cfg: rowseg::losses::LossConfig,
}

pub fn loss_case(seed: u64) -> LossCase {
    let mut r = rng::stream(seed, "loss-case");
    let n = rng::int_inclusive(&mut r, 1, 2);
    let k = rng::int_inclusive(&mut r, 2, 6);
    let h = rng::int_inclusive(&mut r, 3, 9);
    let w = rng::int_inclusive(&mut r, 3, 9);
    let scale = rng::uniform(&mut r, 0.5, 4.0);
    let mut gt = random_labels(n, h, w, k, rng::uniform(&mut r, 0.0, 0.3), seed);
    gt.data_mut()[0] = 0;
    let cfg = rowseg::losses::LossConfig { t: rng::uniform(&mut r, 0.2, 0.9), ..Default::default() };
    let s0 = normals(&[n, k, h, w], seed, "s0").map(|v| v * scale);
    let s1 = normals(&[n, k, h, w], seed, "s1").map(|v| v * scale);
    let bz = normals(&[n, 1, h, w], seed, "bz").map(|v| v * 3.0);
    LossCase { s0, s1, bz, gt, cfg }
}

/// Deviation of each loss term from the oracle on one case: `[s, b, bas, total]`.
pub fn loss_deviations(seed: u64) -> [f64; 4] {
    use rowseg::losses::{boundary_gt, total_loss, BoundaryMode};
    let c = loss_case(seed);
    let b_gt = boundary_gt(&c.gt, BoundaryMode::Transition, 1);
    let all = |_: usize, _: usize, _: usize| true;
    let s = ce_oracle(&c.s0, &c.gt, all).unwrap() + ce_oracle(&c.s1, &c.gt, all).unwrap();
    let b = bce_oracle(&c.bz, b_gt.data(), &c.gt, c.cfg.clip_eps);
    let bas = bas_oracle(&c.s1, &c.bz, &c.gt, c.cfg.t);
    let got = total_loss(&c.s0, &c.s1, &c.bz, &c.gt, &b_gt, &c.cfg).unwrap();
    [(got.s - s).abs(), (got.b - b).abs(), (got.bas - bas).abs(), (got.total - (s + bas + b)).abs()]
}

/// Whether accumulated counts equal the direct tally on one random case.
pub fn confusion_case(seed: u64) -> bool {
    let mut r = rng::stream(seed, "cm-case");
    let k = rng::int_inclusive(&mut r, 2, 7);
    let (n, h, w) = (rng::int_inclusive(&mut r, 1, 3), rng::int_inclusive(&mut r, 1, 12), rng::int_inclusive(&mut r, 1, 12));
    let gt = random_labels(n, h, w, k, 0.15, seed);
    let pred = random_labels(n, h, w, k, 0.0, seed + 10_000);
    let mut cm = rowseg::metrics::ConfusionMatrix::new(k);
    cm.accumulate(&pred, &gt).unwrap();
    let want = confusion_oracle(pred.data(), gt.data(), k);
    (0..k).all(|p| (0..k).all(|g| cm.get(p, g) == want[p][g]))
        && cm.total() as usize == gt.data().iter().filter(|&&v| v != IGNORE).count()
}

/// Outcome of comparing a report with its closed forms on one random matrix.
pub struct ReportCheck {
    pub exact: bool,
    pub ordered: bool,
}

pub fn report_case(seed: u64) -> ReportCheck {
    let k = 2 + (seed % 6) as usize;
    let mut rows = random_matrix(k, seed);
    if rows.iter().flatten().all(|&v| v == 0) {
        rows[0][0] = 1;
    }
    let total: u64 = rows.iter().flatten().sum();
    let rep = rowseg::metrics::compute_report(&rowseg::metrics::ConfusionMatrix::from_rows(&rows).unwrap()).unwrap();
    let q = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (mut exact, mut ordered) = (true, true);
    let (mut included, mut iou_sum, mut tp_sum) = (0usize, 0.0, 0u64);
    for c in 0..k {
        let tp = rows[c][c];
        let gt: u64 = (0..k).map(|p| rows[p][c]).sum();
        let pred: u64 = rows[c].iter().sum();
        exact &= rep.iou[c] == q(tp, gt + pred - tp)
            && rep.acc[c] == q(tp, gt)
            && rep.precision[c] == q(tp, pred)
            && rep.gt_pixels[c] == gt
            && rep.included[c] == (gt > 0 || pred > 0);
        ordered &= rep.iou[c] <= rep.acc[c].min(rep.precision[c]);
        ordered &= [rep.iou[c], rep.acc[c], rep.precision[c], rep.fscore[c]].iter().all(|v| (0.0..=1.0).contains(v));
        if rep.included[c] {
            included += 1;
            iou_sum += rep.iou[c];
        }
        tp_sum += tp;
    }
    exact &= rep.aacc == tp_sum as f64 / total as f64 && (rep.miou - iou_sum / included as f64).abs() <= 1e-15;
    ReportCheck { exact, ordered }
}

/// Random network layout for profiler checks.
pub fn random_network(seed: u64) -> rowseg::net::NetworkConfig {
    use rowseg::net::{NetworkConfig, RpemSites};
    let mut r = rng::stream(seed, "profile-config");
    let pick = |r: &mut _, lo, hi| rng::int_inclusive(r, lo, hi);
    let strides = match pick(&mut r, 0, 2) {
        0 => vec![2, 2],
        1 => vec![2, 2, 2],
        _ => vec![2, 1, 2, 2],
    };
    let sites = [
        RpemSites::ALL,
        RpemSites::NONE,
        RpemSites { stem_tail: true, detail_mid: false },
        RpemSites { stem_tail: false, detail_mid: true },
    ][pick(&mut r, 0, 3)];
    NetworkConfig {
        num_classes: pick(&mut r, 2, 7),
        base_width: 2 * pick(&mut r, 1, 6),
        stem_strides: strides,
        detail_blocks: pick(&mut r, 1, 4),
        context_blocks_per_stage: pick(&mut r, 1, 3),
        boundary_blocks: pick(&mut r, 1, 3),
        rpem_sites: sites,
        rpem_blocks: pick(&mut r, 1, 3),
        rpem_star_blocks: pick(&mut r, 1, 2),
        per_channel_gate: pick(&mut r, 0, 1) == 1,
        gate_width: [0, 3, 8][pick(&mut r, 0, 2)],
        head_width: [0, 5, 24][pick(&mut r, 0, 2)],
        input_hw: (128, 128),
        ..NetworkConfig::tiny()
    }
}
