//! Synthetic maritime scenes: sky above a horizon, sea below, an optional land
//! band across the horizon, small objects near it and a fog band blurring the
//! sea-sky separation.

use rand_chacha::ChaCha8Rng;

use super::{ClassScheme, Sample};
use crate::error::{Error, Result};
use crate::losses::LabelMap;
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    /// Horizon row range as fractions of the height.
    pub horizon_min: f64,
    pub horizon_max: f64,
    /// Probability that a land band is drawn.
    pub land_prob: f64,
    /// Largest land band height as a fraction of the height.
    pub land_max: f64,
    pub max_objects: usize,
    /// Blend toward white at the horizon, in `[0, 1]`.
    pub fog_strength: f64,
    /// Fog half-width as a fraction of the height.
    pub fog_band: f64,
    pub noise_std: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            height: 64,
            width: 96,
            horizon_min: 0.25,
            horizon_max: 0.5,
            land_prob: 0.25,
            land_max: 0.15,
            max_objects: 5,
            fog_strength: 0.3,
            fog_band: 0.05,
            noise_std: 0.02,
        }
    }
}

impl SynthConfig {
    /// Sea and sky only, without fog.
    pub fn plain(height: usize, width: usize) -> Self {
        SynthConfig { height, width, land_prob: 0.0, max_objects: 0, fog_strength: 0.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 32 || self.width < 32 {
            return Err(Error::Config(format!("synthetic scenes need at least 32x32, got {}x{}", self.height, self.width)));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(self.horizon_min) && unit(self.horizon_max) && self.horizon_min <= self.horizon_max) {
            return Err(Error::Config("horizon range must be an ordered pair in [0, 1]".into()));
        }
        if !(unit(self.land_prob) && unit(self.land_max) && unit(self.fog_strength) && unit(self.fog_band)) {
            return Err(Error::Config("land, fog and band fractions must lie in [0, 1]".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config("noise_std must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Shape {
    Rect,
    Ellipse,
}

struct Object {
    class: u8,
    shape: Shape,
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    color: [f64; 3],
}

impl Object {
    fn covers(&self, y: usize, x: usize) -> bool {
        let dy = (y as f64 + 0.5 - self.cy) / self.ry;
        let dx = (x as f64 + 0.5 - self.cx) / self.rx;
        match self.shape {
            Shape::Rect => dy.abs() <= 1.0 && dx.abs() <= 1.0,
            Shape::Ellipse => dy * dy + dx * dx <= 1.0,
        }
    }
}

/// One scene. Draw order: horizon, land, objects, sea texture phase, noise.
pub fn synth_scene(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Sample> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let hf = h as f64;
    let lo = (cfg.horizon_min * hf).ceil() as usize;
    let hi = ((cfg.horizon_max * hf).floor() as usize).max(lo);
    let horizon = rng::int_inclusive(rng, lo, hi);

    let mut labels = vec![ClassScheme::SKY; h * w];
    for v in &mut labels[horizon * w..] {
        *v = ClassScheme::SEA;
    }

    // land: a band straddling the horizon from one side of the image
    let has_land = rng::unit(rng) < cfg.land_prob;
    let land_h = rng::uniform(rng, 0.0, cfg.land_max * hf);
    let land_frac = rng::uniform(rng, 0.2, 0.6);
    let land_left = rng::unit(rng) < 0.5;
    let mut land = None;
    if has_land {
        let top = (horizon as f64 - land_h / 2.0).round().max(0.0) as usize;
        let bot = ((horizon as f64 + land_h / 2.0).round() as usize).min(h);
        let span = (land_frac * w as f64).round() as usize;
        let (x0, x1) = if land_left { (0, span) } else { (w - span, w) };
        for y in top..bot {
            for v in &mut labels[y * w + x0..y * w + x1] {
                *v = ClassScheme::LAND;
            }
        }
        land = Some((top, bot, x0, x1));
    }

    let count = rng::int_inclusive(rng, 0, cfg.max_objects);
    let mut objects = Vec::with_capacity(count);
    for _ in 0..count {
        let kind = rng::int_inclusive(rng, 0, 2);
        let cx = rng::uniform(rng, 0.0, w as f64);
        let jitter = rng::uniform(rng, -0.05, 0.05) * hf;
        let size = rng::uniform(rng, 0.5, 1.0);
        let obj = match kind {
            0 => Object {
                class: ClassScheme::SHIP,
                shape: Shape::Rect,
                rx: size * 0.08 * w as f64,
                ry: size * 0.03 * hf + 0.5,
                cy: horizon as f64 + jitter,
                cx,
                color: [0.92, 0.9, 0.85],
            },
            1 => {
                let ry = size * 0.08 * hf;
                Object {
                    class: ClassScheme::TOWER,
                    shape: Shape::Rect,
                    rx: size * 0.015 * w as f64 + 0.5,
                    ry,
                    cy: horizon as f64 - ry + jitter.abs(),
                    cx,
                    color: [0.35, 0.35, 0.4],
                }
            }
            _ => Object {
                class: ClassScheme::OBSTACLE,
                shape: Shape::Ellipse,
                rx: size * 0.03 * w as f64 + 0.5,
                ry: size * 0.03 * hf + 0.5,
                cy: horizon as f64 + jitter.abs(),
                cx,
                color: [0.85, 0.35, 0.1],
            },
        };
        objects.push(obj);
    }
    for o in &objects {
        let y0 = (o.cy - o.ry).floor().max(0.0) as usize;
        let y1 = ((o.cy + o.ry).ceil().max(0.0) as usize).min(h);
        let x0 = (o.cx - o.rx).floor().max(0.0) as usize;
        let x1 = ((o.cx + o.rx).ceil().max(0.0) as usize).min(w);
        for y in y0..y1 {
            for x in x0..x1 {
                if o.covers(y, x) {
                    labels[y * w + x] = o.class;
                }
            }
        }
    }

    let phase = rng::uniform(rng, 0.0, std::f64::consts::TAU);
    let noise = rng::normals(rng, 3 * h * w);
    let hw = h * w;
    let mut image = vec![0f32; 3 * hw];
    let fog_half = (cfg.fog_band * hf).max(1e-9);
    for y in 0..h {
        let fog = cfg.fog_strength * (1.0 - (y as f64 - horizon as f64).abs() / fog_half).max(0.0);
        for x in 0..w {
            let p = y * w + x;
            let base = match labels[p] {
                ClassScheme::SKY => {
                    let t = y as f64 / horizon.max(1) as f64;
                    [0.55 + 0.3 * t, 0.7 + 0.2 * t, 0.95]
                }
                ClassScheme::SEA => {
                    let tex = 0.04 * (0.45 * x as f64 + 1.7 * y as f64 + phase).sin() * (0.9 * y as f64 - 0.3 * x as f64).cos();
                    let depth = (y - horizon) as f64 / (h - horizon).max(1) as f64;
                    [0.05 + tex, 0.22 - 0.08 * depth + tex, 0.36 - 0.1 * depth + tex]
                }
                ClassScheme::LAND => {
                    let (top, bot, _, _) = land.expect("land labels imply a band");
                    let t = (y - top) as f64 / (bot - top).max(1) as f64;
                    [0.3 + 0.1 * t, 0.42 - 0.1 * t, 0.2]
                }
                class => objects.iter().rev().find(|o| o.class == class && o.covers(y, x)).map_or([0.5; 3], |o| o.color),
            };
            for c in 0..3 {
                let v = base[c] * (1.0 - fog) + fog + cfg.noise_std * noise[c * hw + p];
                image[c * hw + p] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }
    Sample::new(Tensor::new(&[3, h, w], image)?, LabelMap::new(1, h, w, labels)?, "synth")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_scene_is_sky_over_sea() {
        let cfg = SynthConfig::plain(40, 48);
        for seed in 0..10 {
            let s = synth_scene(&cfg, &mut rng::stream(seed, "synth")).unwrap();
            let first_sea = (0..40).find(|&y| s.labels.get(0, y, 0) == ClassScheme::SEA).unwrap();
            assert!((10..=20).contains(&first_sea));
            for y in 0..40 {
                let expect = if y < first_sea { ClassScheme::SKY } else { ClassScheme::SEA };
                assert!((0..48).all(|x| s.labels.get(0, y, x) == expect));
            }
        }
    }

    #[test]
    fn sea_count_never_decreases_down_the_rows() {
        let cfg = SynthConfig { max_objects: 0, ..Default::default() };
        for seed in 0..20 {
            let s = synth_scene(&cfg, &mut rng::stream(seed, "synth")).unwrap();
            let rows: Vec<usize> =
                (0..cfg.height).map(|y| (0..cfg.width).filter(|&x| s.labels.get(0, y, x) == ClassScheme::SEA).count()).collect();
            assert!(rows.windows(2).all(|p| p[0] <= p[1]), "seed {seed}: {rows:?}");
        }
    }

    #[test]
    fn only_scheme_ids_and_unit_range() {
        let cfg = SynthConfig::default();
        for seed in 0..10 {
            let s = synth_scene(&cfg, &mut rng::stream(seed, "synth")).unwrap();
            s.labels.validate(6).unwrap();
            assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn too_small_is_rejected() {
        assert!(synth_scene(&SynthConfig::plain(16, 64), &mut rng::stream(0, "synth")).is_err());
    }
}
