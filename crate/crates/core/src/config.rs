//! Run configuration: `key = value` text with dotted keys.
//!
//! ```text
//! # comments start with '#'
//! net.base_width = 16
//! rpem.kind = sine_norm
//! train.crop = 64x96
//! ```
//!
//! Unknown keys are rejected. [`KEYS`] lists every key; [`Config::to_text`]
//! writes all of them, so a written config reads back to the same value.
//!
//! ```
//! use rowseg::config::{Config, KEYS};
//! let cfg = Config::default();
//! let text = cfg.to_text();
//! assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), KEYS.len());
//! assert_eq!(Config::parse(&text).unwrap(), cfg);
//! for k in KEYS {
//!     assert!(cfg.get(k.key).is_some(), "{}", k.key);
//! }
//! ```

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::data::{AugmentConfig, ClassScheme};
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::net::{NetworkConfig, RpemSites};
use crate::train::TrainConfig;

pub struct KeySpec {
    pub key: &'static str,
    pub doc: &'static str,
}

const fn spec(key: &'static str, doc: &'static str) -> KeySpec {
    KeySpec { key, doc }
}

pub const KEYS: &[KeySpec] = &[
    spec("net.base_width", "base channel width C"),
    spec("net.stem_strides", "stride of each stem residual module"),
    spec("net.detail_blocks", "residual modules in the detail branch"),
    spec("net.context_blocks", "residual modules per context stage"),
    spec("net.boundary_blocks", "residual modules in the boundary branch"),
    spec("net.head_width", "hidden width of the semantic heads (0 = 2C)"),
    spec("rpem.kind", "row encoding: linear, sine, sine_norm, noise"),
    spec("rpem.sine_mode", "sinusoid argument order: standard, as_written"),
    spec("rpem.sites", "stem_tail, detail_mid, both or none"),
    spec("rpem.blocks", "residual modules inside the detail RPEM"),
    spec("rpem.star_blocks", "residual modules inside the stem RPEM*"),
    spec("rpem.per_channel_gate", "one gate per channel instead of per pixel"),
    spec("rpem.gate_width", "hidden width of the gate (0 = module width)"),
    spec("rpem.noise_seed", "seed of the noise encoding"),
    spec("loss.t", "boundary confidence threshold of the BAS term"),
    spec("loss.clip_eps", "probability clip of the boundary cross-entropy"),
    spec("loss.reduction", "mean or sum over valid pixels"),
    spec("loss.boundary_mode", "boundary ground truth: transition or canny"),
    spec("loss.dilate_radius", "boundary dilation radius in pixels"),
    spec("train.lr0", "initial learning rate"),
    spec("train.total_iters", "training iterations"),
    spec("train.batch_size", "samples per iteration"),
    spec("train.poly_power", "exponent of the poly schedule"),
    spec("train.momentum", "SGD momentum"),
    spec("train.weight_decay", "L2 weight decay (not applied to norm gains and shifts)"),
    spec("train.seed", "seed for initialization, shuffling and augmentation"),
    spec("train.crop", "training crop HxW"),
    spec("train.eval_interval", "iterations between checkpoints (0 = end only)"),
    spec("train.checkpoint", "checkpoint path"),
    spec("train.log", "training log CSV path"),
    spec("data.classes", "comma-separated class names in id order"),
    spec("data.scale_min", "smallest random rescale factor"),
    spec("data.scale_max", "largest random rescale factor"),
    spec("data.flip_prob", "horizontal flip probability"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub classes: ClassScheme,
    pub scale_min: f64,
    pub scale_max: f64,
    pub flip_prob: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { classes: ClassScheme::default(), scale_min: 0.5, scale_max: 2.0, flip_prob: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub net: NetworkConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config::tiny()
    }
}

fn parse_num<V: std::str::FromStr>(key: &str, v: &str) -> Result<V> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{v}'"))),
    }
}

pub fn parse_hw(v: &str) -> Result<(usize, usize)> {
    let (h, w) = v.split_once('x').ok_or_else(|| Error::Config(format!("expected HxW, got '{v}'")))?;
    Ok((parse_num("height", h.trim())?, parse_num("width", w.trim())?))
}

impl Config {
    pub fn tiny() -> Self {
        let net = NetworkConfig::tiny();
        Config { train: TrainConfig::tiny(net.input_hw), net, loss: LossConfig::default(), data: DataConfig::default() }
    }

    /// Full-scale values: 120k iterations, batch 6, 536×960 crops.
    pub fn paper() -> Self {
        let net = NetworkConfig::paper();
        let train = TrainConfig { total_iters: 120_000, batch_size: 6, ..TrainConfig::tiny(net.input_hw) };
        Config { net, train, loss: LossConfig::default(), data: DataConfig::default() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "tiny" => Ok(Self::tiny()),
            "paper" => Ok(Self::paper()),
            _ => Err(Error::Config(format!("unknown preset '{name}' (tiny, paper)"))),
        }
    }

    /// Applies `text` on top of the tiny preset.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::tiny();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{line}'", i + 1)))?;
            self.set(k.trim(), v.trim()).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", i + 1)),
                other => other,
            })?;
        }
        self.validate()
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("expected key=value, got '{kv}'")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let (n, t, l, d) = (&mut self.net, &mut self.train, &mut self.loss, &mut self.data);
        match key {
            "net.base_width" => n.base_width = parse_num(key, v)?,
            "net.stem_strides" => {
                n.stem_strides = v.split(',').map(|s| parse_num(key, s.trim())).collect::<Result<_>>()?;
            }
            "net.detail_blocks" => n.detail_blocks = parse_num(key, v)?,
            "net.context_blocks" => n.context_blocks_per_stage = parse_num(key, v)?,
            "net.boundary_blocks" => n.boundary_blocks = parse_num(key, v)?,
            "net.head_width" => n.head_width = parse_num(key, v)?,
            "rpem.kind" => n.rpe_kind = v.parse()?,
            "rpem.sine_mode" => n.sine_mode = v.parse()?,
            "rpem.sites" => n.rpem_sites = RpemSites::parse(v)?,
            "rpem.blocks" => n.rpem_blocks = parse_num(key, v)?,
            "rpem.star_blocks" => n.rpem_star_blocks = parse_num(key, v)?,
            "rpem.per_channel_gate" => n.per_channel_gate = parse_bool(key, v)?,
            "rpem.gate_width" => n.gate_width = parse_num(key, v)?,
            "rpem.noise_seed" => n.noise_seed = parse_num(key, v)?,
            "loss.t" => l.t = parse_num(key, v)?,
            "loss.clip_eps" => l.clip_eps = parse_num(key, v)?,
            "loss.reduction" => l.reduction = v.parse()?,
            "loss.boundary_mode" => l.boundary_mode = v.parse()?,
            "loss.dilate_radius" => l.dilate_radius = parse_num(key, v)?,
            "train.lr0" => t.lr0 = parse_num(key, v)?,
            "train.total_iters" => t.total_iters = parse_num(key, v)?,
            "train.batch_size" => t.batch_size = parse_num(key, v)?,
            "train.poly_power" => t.poly_power = parse_num(key, v)?,
            "train.momentum" => t.momentum = parse_num(key, v)?,
            "train.weight_decay" => t.weight_decay = parse_num(key, v)?,
            "train.seed" => t.seed = parse_num(key, v)?,
            "train.crop" => {
                t.crop = parse_hw(v)?;
                n.input_hw = t.crop;
            }
            "train.eval_interval" => t.eval_interval = parse_num(key, v)?,
            "train.checkpoint" => t.checkpoint = PathBuf::from(v),
            "train.log" => t.log = PathBuf::from(v),
            "data.classes" => {
                d.classes = ClassScheme::parse(v)?;
                n.num_classes = d.classes.len();
            }
            "data.scale_min" => d.scale_min = parse_num(key, v)?,
            "data.scale_max" => d.scale_max = parse_num(key, v)?,
            "data.flip_prob" => d.flip_prob = parse_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let (n, t, l, d) = (&self.net, &self.train, &self.loss, &self.data);
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        Some(match key {
            "net.base_width" => n.base_width.to_string(),
            "net.stem_strides" => join(&n.stem_strides),
            "net.detail_blocks" => n.detail_blocks.to_string(),
            "net.context_blocks" => n.context_blocks_per_stage.to_string(),
            "net.boundary_blocks" => n.boundary_blocks.to_string(),
            "net.head_width" => n.head_width.to_string(),
            "rpem.kind" => n.rpe_kind.as_str().into(),
            "rpem.sine_mode" => n.sine_mode.as_str().into(),
            "rpem.sites" => n.rpem_sites.to_config_string(),
            "rpem.blocks" => n.rpem_blocks.to_string(),
            "rpem.star_blocks" => n.rpem_star_blocks.to_string(),
            "rpem.per_channel_gate" => n.per_channel_gate.to_string(),
            "rpem.gate_width" => n.gate_width.to_string(),
            "rpem.noise_seed" => n.noise_seed.to_string(),
            "loss.t" => l.t.to_string(),
            "loss.clip_eps" => l.clip_eps.to_string(),
            "loss.reduction" => l.reduction.as_str().into(),
            "loss.boundary_mode" => l.boundary_mode.as_str().into(),
            "loss.dilate_radius" => l.dilate_radius.to_string(),
            "train.lr0" => t.lr0.to_string(),
            "train.total_iters" => t.total_iters.to_string(),
            "train.batch_size" => t.batch_size.to_string(),
            "train.poly_power" => t.poly_power.to_string(),
            "train.momentum" => t.momentum.to_string(),
            "train.weight_decay" => t.weight_decay.to_string(),
            "train.seed" => t.seed.to_string(),
            "train.crop" => format!("{}x{}", t.crop.0, t.crop.1),
            "train.eval_interval" => t.eval_interval.to_string(),
            "train.checkpoint" => t.checkpoint.display().to_string(),
            "train.log" => t.log.display().to_string(),
            "data.classes" => d.classes.names().join(","),
            "data.scale_min" => d.scale_min.to_string(),
            "data.scale_max" => d.scale_max.to_string(),
            "data.flip_prob" => d.flip_prob.to_string(),
            _ => return None,
        })
    }

    /// Every key, in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let _ = writeln!(out, "{} = {}", k.key, self.get(k.key).expect("every listed key is readable"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.loss.validate()?;
        self.train.validate()?;
        self.augment().validate()
    }

    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            crop_h: self.train.crop.0,
            crop_w: self.train.crop.1,
            scale_min: self.data.scale_min,
            scale_max: self.data.scale_max,
            flip_prob: self.data.flip_prob,
        }
    }

    /// Key reference with defaults, for help output.
    pub fn key_help() -> String {
        let defaults = Self::tiny();
        let width = KEYS.iter().map(|k| k.key.len()).max().unwrap_or(0);
        let mut out = String::from("Config keys (default in brackets):\n");
        for k in KEYS {
            let _ = writeln!(out, "  {:<width$}  {} [{}]", k.key, k.doc, defaults.get(k.key).unwrap_or_default());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_overrides() {
        let cfg = Config::parse("# run\nnet.base_width = 8   # narrow\n\ntrain.crop = 32x64\nrpem.kind=noise\n").unwrap();
        assert_eq!(cfg.net.base_width, 8);
        assert_eq!(cfg.net.input_hw, (32, 64));
        assert_eq!(cfg.net.rpe_kind.as_str(), "noise");
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = Config::parse("net.base_width = 8\nnet.depth = 3\n").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("net.depth"), "{err}");
        assert!(Config::parse("just words\n").is_err());
    }

    #[test]
    fn classes_set_the_class_count() {
        let cfg = Config::parse("data.classes = water, air\n").unwrap();
        assert_eq!(cfg.net.num_classes, 2);
    }

    #[test]
    fn every_key_round_trips_for_both_presets() {
        for cfg in [Config::tiny(), Config::paper()] {
            let mut back = Config::tiny();
            back.apply_text(&cfg.to_text()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn help_lists_every_key() {
        let help = Config::key_help();
        assert!(KEYS.iter().all(|k| help.contains(k.key)));
    }
}
