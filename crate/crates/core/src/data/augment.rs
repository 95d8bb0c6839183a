//! Random resize, crop and horizontal flip.

use rand_chacha::ChaCha8Rng;

use super::Sample;
use crate::error::{Error, Result};
use crate::kernels;
use crate::losses::{LabelMap, IGNORE};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub crop_h: usize,
    pub crop_w: usize,
    pub scale_min: f64,
    pub scale_max: f64,
    pub flip_prob: f64,
}

impl AugmentConfig {
    pub fn new(crop_h: usize, crop_w: usize) -> Self {
        AugmentConfig { crop_h, crop_w, scale_min: 0.5, scale_max: 2.0, flip_prob: 0.5 }
    }

    /// Crop only: no rescaling, no flipping.
    pub fn fixed(crop_h: usize, crop_w: usize) -> Self {
        AugmentConfig { scale_min: 1.0, scale_max: 1.0, flip_prob: 0.0, ..Self::new(crop_h, crop_w) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.crop_h == 0 || self.crop_w == 0 {
            return Err(Error::Config("crop size must be positive".into()));
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max) {
            return Err(Error::Config(format!("scale range [{}, {}] is invalid", self.scale_min, self.scale_max)));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::Config(format!("flip probability {} outside [0, 1]", self.flip_prob)));
        }
        Ok(())
    }
}

/// Nearest-neighbour resize using pixel centres, so no new ids can appear.
pub fn resize_labels_nearest(labels: &LabelMap, out_h: usize, out_w: usize) -> LabelMap {
    let (n, h, w) = labels.dims();
    let src = |o: usize, size_in: usize, size_out: usize| (((o as f64 + 0.5) * size_in as f64 / size_out as f64) as usize).min(size_in - 1);
    let cols: Vec<usize> = (0..out_w).map(|x| src(x, w, out_w)).collect();
    let mut data = Vec::with_capacity(n * out_h * out_w);
    for b in 0..n {
        for y in 0..out_h {
            let sy = src(y, h, out_h);
            data.extend(cols.iter().map(|&sx| labels.get(b, sy, sx)));
        }
    }
    LabelMap::new(n, out_h, out_w, data).expect("sizes are positive")
}

fn resize_image(image: &Tensor<f32>, h: usize, w: usize) -> Tensor<f32> {
    let [c, ih, iw] = [image.shape()[0], image.shape()[1], image.shape()[2]];
    let x = image.clone().reshape(&[1, c, ih, iw]).expect("same element count");
    kernels::bilinear_resize(&x, h, w)
        .expect("positive sizes")
        .reshape(&[c, h, w])
        .expect("same element count")
}

/// Mirrors the sample left to right.
pub fn hflip(sample: &Sample) -> Sample {
    let w = sample.width();
    let mut image = sample.image.clone();
    let src = sample.image.data();
    for (row, out) in image.data_mut().chunks_mut(w).enumerate() {
        let line = &src[row * w..(row + 1) * w];
        for (o, v) in out.iter_mut().zip(line.iter().rev()) {
            *o = *v;
        }
    }
    let mut labels = sample.labels.clone();
    let lsrc = sample.labels.data();
    for (row, out) in labels.data_mut().chunks_mut(w).enumerate() {
        let line = &lsrc[row * w..(row + 1) * w];
        for (o, v) in out.iter_mut().zip(line.iter().rev()) {
            *o = *v;
        }
    }
    Sample { image, labels, id: sample.id.clone() }
}

/// Cuts `crop_h × crop_w` at (`top`, `left`), padding beyond the border with
/// zero pixels and ignore labels.
fn crop(sample: &Sample, top: usize, left: usize, crop_h: usize, crop_w: usize) -> Sample {
    let (h, w) = (sample.height(), sample.width());
    let mut img = vec![0f32; 3 * crop_h * crop_w];
    let mut lbl = vec![IGNORE; crop_h * crop_w];
    let src = sample.image.data();
    for y in 0..crop_h {
        let sy = top + y;
        if sy >= h {
            break;
        }
        let n = crop_w.min(w.saturating_sub(left));
        for c in 0..3 {
            let s = (c * h + sy) * w + left;
            let d = (c * crop_h + y) * crop_w;
            img[d..d + n].copy_from_slice(&src[s..s + n]);
        }
        let s = sy * w + left;
        lbl[y * crop_w..y * crop_w + n].copy_from_slice(&sample.labels.data()[s..s + n]);
    }
    Sample {
        image: Tensor::new(&[3, crop_h, crop_w], img).expect("crop size positive"),
        labels: LabelMap::new(1, crop_h, crop_w, lbl).expect("crop size positive"),
        id: sample.id.clone(),
    }
}

/// Rescales by a factor drawn from `[scale_min, scale_max]` (bilinear for the
/// image, nearest for labels), crops a uniformly placed window and flips with
/// probability `flip_prob`. Windows larger than the rescaled sample are padded
/// at the bottom and right with zeros and ignore labels. Draws, in order:
/// scale, top, left, flip.
pub fn augment(sample: &Sample, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Sample {
    let scale = rng::uniform(rng, cfg.scale_min, cfg.scale_max);
    let (h, w) = (sample.height(), sample.width());
    let nh = ((h as f64 * scale).round() as usize).max(1);
    let nw = ((w as f64 * scale).round() as usize).max(1);
    let resized = if (nh, nw) == (h, w) {
        sample.clone()
    } else {
        Sample {
            image: resize_image(&sample.image, nh, nw),
            labels: resize_labels_nearest(&sample.labels, nh, nw),
            id: sample.id.clone(),
        }
    };
    let top = rng::int_inclusive(rng, 0, nh.saturating_sub(cfg.crop_h));
    let left = rng::int_inclusive(rng, 0, nw.saturating_sub(cfg.crop_w));
    let flip = rng::unit(rng) < cfg.flip_prob;
    let out = crop(&resized, top, left, cfg.crop_h, cfg.crop_w);
    if flip {
        hflip(&out)
    } else {
        out
    }
}
