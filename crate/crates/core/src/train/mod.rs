//! SGD training with a poly schedule, checkpoints, evaluation and the
//! encoding ablation.
//!
//! Training log columns: `iter,lr,L_S,L_B,L_BAS,L`, one row per iteration,
//! where `iter` is the zero-based index of the step and `lr` the rate it used.
//!
//! Every random draw comes from a stream keyed by the seed and the iteration
//! (`shuffle/<epoch>`, `augment/<iter>/<slot>`), so the state after `n` steps
//! is fully described by the parameters, buffers, momentum and `n`.

mod checkpoint;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub use checkpoint::{Checkpoint, CheckpointError, NamedTensor, MAGIC};

use crate::autodiff::Graph;
use crate::config::Config;
use crate::data::{augment, stack_images, Sample};
use crate::encodings::RpeKind;
use crate::error::{Error, Result};
use crate::losses::{boundary_gt, total_loss_var, LabelMap, LossBreakdown, IGNORE};
use crate::metrics::ConfusionMatrix;
use crate::net::{build_network, predict_labels, NetworkParams};
use crate::params::{Ctx, Mode, ParamStore};
use crate::rng;
use crate::tensor::{Real, Tensor};

pub const LOG_HEADER: &str = "iter,lr,L_S,L_B,L_BAS,L";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub total_iters: usize,
    pub batch_size: usize,
    pub poly_power: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub crop: (usize, usize),
    /// Iterations between intermediate checkpoints; 0 keeps only the final one.
    pub eval_interval: usize,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
}

impl TrainConfig {
    pub fn tiny(crop: (usize, usize)) -> Self {
        TrainConfig {
            lr0: 0.01,
            total_iters: 2000,
            batch_size: 2,
            poly_power: 0.9,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 0,
            crop,
            eval_interval: 0,
            checkpoint: PathBuf::from("model.ckpt"),
            log: PathBuf::from("train_log.csv"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!("train.lr0 must be positive, got {}", self.lr0)));
        }
        if self.total_iters == 0 || self.batch_size == 0 {
            return Err(Error::Config("train.total_iters and train.batch_size must be at least 1".into()));
        }
        if !(self.poly_power >= 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("poly_power and weight_decay must be non-negative, momentum in [0, 1)".into()));
        }
        Ok(())
    }

    /// Path of the checkpoint written after `iteration` steps.
    pub fn interval_checkpoint(&self, iteration: usize) -> PathBuf {
        let stem = self.checkpoint.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
        let name = match self.checkpoint.extension().and_then(|e| e.to_str()) {
            Some(ext) => format!("{stem}_iter{iteration}.{ext}"),
            None => format!("{stem}_iter{iteration}"),
        };
        self.checkpoint.with_file_name(name)
    }
}

/// `lr0 · (1 − iter/total)^power`.
pub fn poly_lr(iter: usize, cfg: &TrainConfig) -> f64 {
    let frac = iter.min(cfg.total_iters) as f64 / cfg.total_iters as f64;
    cfg.lr0 * (1.0 - frac).powf(cfg.poly_power)
}

/// `v ← μ·v + g + λ·p`, `p ← p − lr·v`. Norm gains and shifts get no decay.
/// A non-finite gradient aborts before any parameter changes.
pub fn sgd_step<T: Real>(store: &mut ParamStore<T>, grads: &[Tensor<T>], velocity: &mut [Tensor<T>], lr: f64, cfg: &TrainConfig) -> Result<()> {
    let n = store.params().len();
    if grads.len() != n || velocity.len() != n {
        return Err(Error::Contract(format!("{n} parameters but {} gradients and {} momentum buffers", grads.len(), velocity.len())));
    }
    for (p, g) in store.params().iter().zip(grads) {
        if g.shape() != p.value.shape() {
            return Err(Error::Contract(format!("{}: gradient shape {:?} vs {:?}", p.name, g.shape(), p.value.shape())));
        }
        if !g.all_finite() {
            return Err(Error::numeric(p.name.clone(), "gradient is not finite"));
        }
    }
    let (mu, lr) = (T::of(cfg.momentum), T::of(lr));
    for ((p, g), v) in store.params_mut().iter_mut().zip(grads).zip(velocity.iter_mut()) {
        let wd = if p.kind.decays() { T::of(cfg.weight_decay) } else { T::zero() };
        for ((x, &dx), m) in p.value.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *m = mu * *m + dx + wd * *x;
            *x = *x - lr * *m;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

impl LogRow {
    pub fn to_csv(&self) -> String {
        let l = &self.loss;
        format!("{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}", self.iter, self.lr, l.s, l.b, l.bas, l.total)
    }
}

/// Parameters, optimizer state and the step counter.
pub struct Trainer {
    pub cfg: Config,
    pub params: NetworkParams<f32>,
    pub velocity: Vec<Tensor<f32>>,
    pub iteration: usize,
}

impl Trainer {
    pub fn new(cfg: &Config) -> Result<Self> {
        cfg.validate()?;
        let params = build_network(&cfg.net, cfg.train.seed)?;
        let velocity = params.store.params().iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Ok(Trainer { cfg: cfg.clone(), params, velocity, iteration: 0 })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut t = Trainer::new(&ckpt.config)?;
        t.iteration = ckpt.iteration;
        let missing = |name: &str| Error::Data(format!("checkpoint lacks tensor '{name}'"));
        let fill = |dst: &mut Tensor<f32>, name: &str| -> Result<()> {
            let src = ckpt.tensor(name).ok_or_else(|| missing(name))?;
            if src.dims != dst.shape() {
                return Err(Error::Data(format!("{name}: checkpoint shape {:?} vs network {:?}", src.dims, dst.shape())));
            }
            dst.data_mut().copy_from_slice(&src.data);
            Ok(())
        };
        for p in t.params.store.params_mut() {
            fill(&mut p.value, &p.name.clone())?;
        }
        for b in t.params.store.buffers_mut() {
            fill(&mut b.value, &b.name.clone())?;
        }
        let names: Vec<String> = t.params.store.params().iter().map(|p| p.name.clone()).collect();
        for (v, name) in t.velocity.iter_mut().zip(&names) {
            fill(v, &format!("momentum/{name}"))?;
        }
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let named = |name: String, t: &Tensor<f32>| NamedTensor { name, dims: t.shape().to_vec(), data: t.data().to_vec() };
        let store = &self.params.store;
        let mut tensors: Vec<NamedTensor> = store.params().iter().map(|p| named(p.name.clone(), &p.value)).collect();
        tensors.extend(store.buffers().iter().map(|b| named(b.name.clone(), &b.value)));
        tensors.extend(store.params().iter().zip(&self.velocity).map(|(p, v)| named(format!("momentum/{}", p.name), v)));
        Checkpoint { config: self.cfg.clone(), iteration: self.iteration, tensors }
    }

    /// Manifest indices of the batch at `iter`: consecutive slots of a
    /// sequence of seeded permutations, one per epoch.
    pub fn batch_indices(&self, iter: usize, samples: usize) -> Vec<usize> {
        let b = self.cfg.train.batch_size;
        let mut out = Vec::with_capacity(b);
        let mut cached: Option<(usize, Vec<usize>)> = None;
        for slot in iter * b..(iter + 1) * b {
            let epoch = slot / samples;
            if cached.as_ref().map(|c| c.0) != Some(epoch) {
                let perm = rng::permutation(&mut rng::stream(self.cfg.train.seed, &format!("shuffle/{epoch}")), samples);
                cached = Some((epoch, perm));
            }
            out.push(cached.as_ref().expect("just filled").1[slot % samples]);
        }
        out
    }

    /// One optimizer step on the next batch.
    pub fn step(&mut self, samples: &[Sample]) -> Result<LogRow> {
        if samples.is_empty() {
            return Err(Error::Data("training needs at least one sample".into()));
        }
        let iter = self.iteration;
        let aug = self.cfg.augment();
        let seed = self.cfg.train.seed;
        let batch: Vec<Sample> = self
            .batch_indices(iter, samples.len())
            .into_iter()
            .enumerate()
            .map(|(slot, i)| augment(&samples[i], &aug, &mut rng::stream(seed, &format!("augment/{iter}/{slot}"))))
            .collect();
        let refs: Vec<&Sample> = batch.iter().collect();
        let x: Tensor<f32> = stack_images(&refs)?;
        let labels = LabelMap::stack(&batch.iter().map(|s| s.labels.clone()).collect::<Vec<_>>())?;
        let b_gt = boundary_gt(&labels, self.cfg.loss.boundary_mode, self.cfg.loss.dilate_radius);

        let at_iter = |e: Error| match e {
            Error::Numeric { site, detail } => Error::Numeric { site: format!("iteration {iter}: {site}"), detail },
            other => other,
        };
        let mut g = Graph::new();
        let (grads, updates, loss) = {
            let mut ctx = Ctx::new(&mut g, &self.params.store, Mode::Train);
            let xv = ctx.g.constant(x);
            let out = self.params.net.forward(&mut ctx, xv).map_err(at_iter)?;
            let updates = std::mem::take(&mut ctx.norm_updates);
            let vars = ctx.vars().to_vec();
            let lv = total_loss_var(&mut g, &out, &labels, &b_gt, &self.cfg.loss).map_err(at_iter)?;
            let loss = lv.values(&g);
            if !loss.total.is_finite() {
                return Err(Error::numeric(format!("iteration {iter}: loss"), format!("{loss:?}")));
            }
            let mut gr = g.backward(lv.total).map_err(at_iter)?;
            let grads: Vec<Tensor<f32>> = vars
                .iter()
                .zip(self.params.store.params())
                .map(|(&v, p)| gr.take(v).unwrap_or_else(|| Tensor::zeros(p.value.shape())))
                .collect();
            (grads, updates, loss)
        };
        drop(g);

        let lr = poly_lr(iter, &self.cfg.train);
        sgd_step(&mut self.params.store, &grads, &mut self.velocity, lr, &self.cfg.train).map_err(at_iter)?;
        self.params.store.apply_norm_updates(&updates);
        self.iteration += 1;
        Ok(LogRow { iter, lr, loss })
    }

    /// Steps until `end` iterations are done, passing each row to `on_row`.
    pub fn run_until(&mut self, samples: &[Sample], end: usize, mut on_row: impl FnMut(&Trainer, &LogRow) -> Result<()>) -> Result<()> {
        while self.iteration < end.min(self.cfg.train.total_iters) {
            let row = self.step(samples)?;
            on_row(self, &row)?;
        }
        Ok(())
    }
}

/// Trains to `train.total_iters`, appending to the log at `train.log` and
/// writing checkpoints every `train.eval_interval` steps and at the end.
/// With `resume`, training continues from that checkpoint.
pub fn train_loop(cfg: &Config, samples: &[Sample], resume: Option<&Checkpoint>) -> Result<Checkpoint> {
    train_loop_with(cfg, samples, resume, |_| {})
}

/// [`train_loop`] that also hands every log row to `progress`.
pub fn train_loop_with(cfg: &Config, samples: &[Sample], resume: Option<&Checkpoint>, mut progress: impl FnMut(&LogRow)) -> Result<Checkpoint> {
    let mut trainer = match resume {
        Some(c) => Trainer::from_checkpoint(c)?,
        None => Trainer::new(cfg)?,
    };
    let tc = trainer.cfg.train.clone();
    let log_path = tc.log.clone();
    let fresh = resume.is_none() || !log_path.exists();
    if !fresh {
        // rows written after the checkpoint belong to the interrupted run
        let text = std::fs::read_to_string(&log_path).map_err(|e| Error::io(&log_path, e))?;
        let kept: String = text
            .lines()
            .enumerate()
            .filter(|(i, line)| *i == 0 || line.split(',').next().and_then(|v| v.parse::<usize>().ok()).is_some_and(|it| it < trainer.iteration))
            .map(|(_, line)| format!("{line}\n"))
            .collect();
        std::fs::write(&log_path, kept).map_err(|e| Error::io(&log_path, e))?;
    }
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    if fresh {
        writeln!(log, "{LOG_HEADER}").map_err(|e| Error::io(&log_path, e))?;
    }
    trainer.run_until(samples, tc.total_iters, |t, row| {
        writeln!(log, "{}", row.to_csv()).map_err(|e| Error::io(&log_path, e))?;
        progress(row);
        if tc.eval_interval > 0 && t.iteration % tc.eval_interval == 0 && t.iteration < tc.total_iters {
            t.checkpoint().save(&tc.interval_checkpoint(t.iteration))?;
        }
        Ok(())
    })?;
    let ckpt = trainer.checkpoint();
    ckpt.save(&tc.checkpoint)?;
    Ok(ckpt)
}

/// Image padded symmetrically to a multiple of `m`: zeros in the image,
/// [`IGNORE`] in the labels. The extra pixel of an odd padding goes to the
/// bottom or right. Returns the padded batch of one, labels and the offset.
pub fn pad_to_multiple(image: &Tensor<f32>, labels: Option<&LabelMap>, m: usize) -> Result<(Tensor<f32>, Option<LabelMap>, (usize, usize))> {
    let [c, h, w]: [usize; 3] =
        image.shape().try_into().map_err(|_| Error::Contract(format!("expected a 3xHxW image, got {:?}", image.shape())))?;
    let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
    let (top, left) = ((ph - h) / 2, (pw - w) / 2);
    let mut data = vec![0f32; c * ph * pw];
    for ch in 0..c {
        for y in 0..h {
            let src = &image.data()[(ch * h + y) * w..(ch * h + y + 1) * w];
            let at = (ch * ph + y + top) * pw + left;
            data[at..at + w].copy_from_slice(src);
        }
    }
    let padded = labels.map(|l| {
        let mut out = vec![IGNORE; ph * pw];
        for y in 0..h {
            for x in 0..w {
                out[(y + top) * pw + x + left] = l.get(0, y, x);
            }
        }
        LabelMap::new(1, ph, pw, out)
    });
    Ok((Tensor::new(&[1, c, ph, pw], data)?, padded.transpose()?, (top, left)))
}

/// Inference on one 3×H×W image at full size: semantic logits `[1, K, H, W]`
/// cropped back from the padded input.
pub fn infer_logits(params: &NetworkParams<f32>, image: &Tensor<f32>) -> Result<Tensor<f32>> {
    let m = params.net.cfg.size_multiple();
    let [_, h, w]: [usize; 3] = image.shape().try_into().map_err(|_| Error::Contract("expected a 3xHxW image".into()))?;
    let (x, _, (top, left)) = pad_to_multiple(image, None, m)?;
    let [_, _, ph, pw] = x.dims4()?;
    params.net.cfg.check_input(ph, pw)?;
    let (out, _) = params.forward(&x, Mode::Infer)?;
    let k = out.s_hat1.shape()[1];
    let src = out.s_hat1.data();
    let mut data = Vec::with_capacity(k * h * w);
    for c in 0..k {
        for y in 0..h {
            let at = (c * ph + y + top) * pw + left;
            data.extend_from_slice(&src[at..at + w]);
        }
    }
    Tensor::new(&[1, k, h, w], data)
}

/// Confusion matrix of full-image inference over `samples`, sharded over
/// `threads` workers. Integer counts make the merge order irrelevant.
pub fn evaluate(params: &NetworkParams<f32>, samples: &[Sample], threads: usize) -> Result<ConfusionMatrix> {
    let k = params.net.cfg.num_classes;
    if samples.is_empty() {
        return Err(Error::Data("evaluation needs at least one sample".into()));
    }
    let one = |s: &Sample| -> Result<ConfusionMatrix> {
        s.labels.validate(k).map_err(|_| Error::Data(format!("{}: labels exceed the {k} classes of the network", s.id)))?;
        let logits = infer_logits(params, &s.image)?;
        let mut cm = ConfusionMatrix::new(k);
        cm.accumulate(&predict_labels(&logits)?, &s.labels)?;
        Ok(cm)
    };
    let threads = threads.clamp(1, samples.len());
    let chunk = samples.len().div_ceil(threads);
    let parts: Vec<Result<ConfusionMatrix>> = std::thread::scope(|scope| {
        let handles: Vec<_> = samples
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    let mut cm = ConfusionMatrix::new(k);
                    for s in part {
                        cm.merge(&one(s)?)?;
                    }
                    Ok(cm)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    let mut total = ConfusionMatrix::new(k);
    for p in parts {
        total.merge(&p?)?;
    }
    Ok(total)
}

/// Worker count from `ROWSEG_THREADS`, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var("ROWSEG_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Identical runs that differ only in the encoding kind.
pub fn ablation(cfg: &Config, samples: &[Sample], kinds: &[RpeKind], iters: usize) -> Result<Vec<(RpeKind, Trainer)>> {
    kinds
        .iter()
        .map(|&kind| {
            let mut c = cfg.clone();
            c.net.rpe_kind = kind;
            let mut t = Trainer::new(&c)?;
            t.run_until(samples, iters, |_, _| Ok(()))?;
            Ok((kind, t))
        })
        .collect()
}

/// Parameter names whose values differ between two checkpoints.
pub fn diff_tensors(a: &Checkpoint, b: &Checkpoint) -> Vec<String> {
    let mut out = Vec::new();
    for t in &a.tensors {
        match b.tensor(&t.name) {
            Some(u) if u.dims == t.dims && u.data.iter().zip(&t.data).all(|(x, y)| x.to_bits() == y.to_bits()) => {}
            _ => out.push(t.name.clone()),
        }
    }
    out.extend(b.tensors.iter().filter(|t| a.tensor(&t.name).is_none()).map(|t| t.name.clone()));
    out
}

/// Reads a training log back into rows of numbers (header skipped).
pub fn read_log(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(str::parse).collect();
        rows.push(row.map_err(|_| Error::Data(format!("{}: malformed log line '{line}'", path.display())))?);
    }
    Ok(rows)
}

/// Summary line for progress output.
pub fn describe(row: &LogRow) -> String {
    let mut s = String::new();
    let _ = write!(s, "iter {:>6}  lr {:.5}  L {:.4} (S {:.4}  B {:.4}  BAS {:.4})", row.iter, row.lr, row.loss.total, row.loss.s, row.loss.b, row.loss.bas);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ParamBuilder, ParamKind};

    #[test]
    fn poly_schedule_endpoints() {
        let cfg = TrainConfig::tiny((64, 96));
        assert_eq!(poly_lr(0, &cfg), 0.01);
        assert_eq!(poly_lr(cfg.total_iters, &cfg), 0.0);
        let linear = TrainConfig { poly_power: 1.0, ..cfg.clone() };
        assert!((poly_lr(1000, &linear) - 0.005).abs() < 1e-15);
        assert!((1..cfg.total_iters).all(|i| poly_lr(i, &cfg) < poly_lr(i - 1, &cfg)));
    }

    fn scalar_store(value: f64, kind_norm: bool) -> ParamStore<f64> {
        let mut b = ParamBuilder::<f64>::new(0);
        if kind_norm {
            b.norm("n", 1).unwrap();
        } else {
            b.conv("c", 1, 1, 1, 1).unwrap();
        }
        let mut s = b.finish();
        s.params_mut()[0].value.data_mut()[0] = value;
        s
    }

    #[test]
    fn plain_sgd_and_zero_gradient() {
        let cfg = TrainConfig { momentum: 0.0, weight_decay: 0.0, ..TrainConfig::tiny((64, 96)) };
        let mut s = scalar_store(1.0, false);
        let grads = vec![Tensor::new(&[1, 1, 1, 1], vec![0.5]).unwrap(), Tensor::zeros(&[1])];
        let mut v = vec![Tensor::zeros(&[1, 1, 1, 1]), Tensor::zeros(&[1])];
        sgd_step(&mut s, &grads, &mut v, 0.1, &cfg).unwrap();
        assert_eq!(s.params()[0].value.data()[0], 1.0 - 0.1 * 0.5);
        assert_eq!(s.params()[1].value.data()[0], 0.0);
    }

    #[test]
    fn momentum_recurrence_by_hand() {
        let cfg = TrainConfig { momentum: 0.9, weight_decay: 0.1, ..TrainConfig::tiny((64, 96)) };
        let mut s = scalar_store(2.0, false);
        let mut v = vec![Tensor::zeros(&[1, 1, 1, 1]), Tensor::zeros(&[1])];
        let g = |x: f64| vec![Tensor::new(&[1, 1, 1, 1], vec![x]).unwrap(), Tensor::zeros(&[1])];
        sgd_step(&mut s, &g(0.5), &mut v, 0.1, &cfg).unwrap();
        sgd_step(&mut s, &g(-0.25), &mut v, 0.05, &cfg).unwrap();
        let v1 = 0.5 + 0.1 * 2.0;
        let p1 = 2.0 - 0.1 * v1;
        let v2 = 0.9 * v1 - 0.25 + 0.1 * p1;
        let p2 = p1 - 0.05 * v2;
        assert!((s.params()[0].value.data()[0] - p2).abs() < 1e-15);
        assert!((v[0].data()[0] - v2).abs() < 1e-15);
    }

    #[test]
    fn norm_parameters_are_not_decayed() {
        let cfg = TrainConfig { momentum: 0.0, weight_decay: 0.5, ..TrainConfig::tiny((64, 96)) };
        let mut s = scalar_store(3.0, true);
        assert_eq!(s.params()[0].kind, ParamKind::NormGain);
        let grads = vec![Tensor::zeros(&[1]), Tensor::zeros(&[1])];
        let mut v = grads.clone();
        sgd_step(&mut s, &grads, &mut v, 0.1, &cfg).unwrap();
        assert_eq!(s.params()[0].value.data()[0], 3.0);
    }

    #[test]
    fn non_finite_gradient_names_the_layer() {
        let cfg = TrainConfig::tiny((64, 96));
        let mut s = scalar_store(1.0, false);
        let grads = vec![Tensor::new(&[1, 1, 1, 1], vec![f64::NAN]).unwrap(), Tensor::zeros(&[1])];
        let mut v = vec![Tensor::zeros(&[1, 1, 1, 1]), Tensor::zeros(&[1])];
        let err = sgd_step(&mut s, &grads, &mut v, 0.1, &cfg).unwrap_err().to_string();
        assert!(err.contains("c.weight"), "{err}");
        assert_eq!(s.params()[0].value.data()[0], 1.0);
    }

    #[test]
    fn symmetric_padding() {
        let img = Tensor::<f32>::full(&[3, 3, 5], 1.0);
        let labels = LabelMap::filled(1, 3, 5, 2);
        let (x, l, off) = pad_to_multiple(&img, Some(&labels), 4).unwrap();
        assert_eq!(x.shape(), &[1, 3, 4, 8]);
        assert_eq!(off, (0, 1));
        let l = l.unwrap();
        assert_eq!(l.valid_count(), 15);
        assert_eq!(l.get(0, 0, 0), IGNORE);
        assert_eq!(l.get(0, 0, 1), 2);
        assert_eq!(l.get(0, 3, 1), IGNORE);
    }

    #[test]
    fn interval_checkpoint_names() {
        let cfg = TrainConfig { checkpoint: PathBuf::from("/tmp/run/m.ckpt"), ..TrainConfig::tiny((64, 96)) };
        assert_eq!(cfg.interval_checkpoint(500), PathBuf::from("/tmp/run/m_iter500.ckpt"));
    }
}
