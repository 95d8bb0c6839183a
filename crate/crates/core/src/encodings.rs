//! Row positional encoding tables.
//!
//! A table holds one value per (row, channel). It carries no column
//! coordinate; use sites broadcast it across the image width.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RpeKind {
    Linear,
    Sine,
    SineNorm,
    Noise,
}

impl RpeKind {
    pub const ALL: [RpeKind; 4] = [RpeKind::Linear, RpeKind::Sine, RpeKind::SineNorm, RpeKind::Noise];

    pub fn as_str(self) -> &'static str {
        match self {
            RpeKind::Linear => "linear",
            RpeKind::Sine => "sine",
            RpeKind::SineNorm => "sine_norm",
            RpeKind::Noise => "noise",
        }
    }
}

impl fmt::Display for RpeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RpeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RpeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown encoding kind '{s}' (linear, sine, sine_norm, noise)")))
    }
}

/// Argument order of the sinusoidal encoding.
///
/// `Standard` treats the row as the position and the channel pair as the
/// frequency index: `sin(i / 10000^(2d/d_model))`. `AsWritten` swaps them:
/// `sin(d / 10000^(2i/d_model))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SineMode {
    AsWritten,
    #[default]
    Standard,
}

impl SineMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SineMode::AsWritten => "as_written",
            SineMode::Standard => "standard",
        }
    }
}

impl fmt::Display for SineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as_written" => Ok(SineMode::AsWritten),
            "standard" => Ok(SineMode::Standard),
            _ => Err(Error::Config(format!("unknown sine mode '{s}' (as_written, standard)"))),
        }
    }
}

/// An `m × d_model` encoding matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RpeTable {
    m: usize,
    d_model: usize,
    kind: RpeKind,
    sine_mode: Option<SineMode>,
    values: Vec<f64>,
}

impl RpeTable {
    /// Builds any kind. `mode` applies to the sine kinds, `seed` to noise.
    pub fn build(kind: RpeKind, m: usize, d_model: usize, mode: SineMode, seed: u64) -> Result<Self> {
        match kind {
            RpeKind::Linear => rpe_linear(m, d_model),
            RpeKind::Sine => rpe_sine(m, d_model, mode),
            RpeKind::SineNorm => rpe_sine_norm(m, d_model, mode),
            RpeKind::Noise => rpe_noise(m, d_model, seed),
        }
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    pub fn kind(&self) -> RpeKind {
        self.kind
    }

    pub fn sine_mode(&self) -> Option<SineMode> {
        self.sine_mode
    }

    pub fn get(&self, row: usize, channel: usize) -> f64 {
        self.values[row * self.d_model + channel]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.d_model..(row + 1) * self.d_model]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The table as a `1 × d_model × m × 1` tensor, broadcastable over batch and width.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let (m, d) = (self.m, self.d_model);
        Tensor::from_fn(&[1, d, m, 1], |i| T::of(self.values[(i % m) * d + i / m]))
    }

    /// Broadcast to `1 × d_model × m × width`.
    pub fn broadcast_width<T: Real>(&self, width: usize) -> Tensor<T> {
        let (m, d) = (self.m, self.d_model);
        Tensor::from_fn(&[1, d, m, width], |i| {
            let row = (i / width) % m;
            let ch = i / (width * m);
            T::of(self.values[row * d + ch])
        })
    }

    /// Scales every value; used by linearity checks.
    pub fn scaled(&self, factor: f64) -> RpeTable {
        RpeTable { values: self.values.iter().map(|v| v * factor).collect(), ..self.clone() }
    }

    /// One row per line, channels comma-separated, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 24);
        for r in 0..self.m {
            let line: Vec<String> = self.row(r).iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

fn check_dims(m: usize, d_model: usize) -> Result<()> {
    if m == 0 || d_model == 0 {
        return Err(Error::Config(format!("encoding needs m >= 1 and d_model >= 1, got m={m} d_model={d_model}")));
    }
    Ok(())
}

/// `values[i][d] = i / m` for zero-based row `i`, identical across channels.
pub fn rpe_linear(m: usize, d_model: usize) -> Result<RpeTable> {
    check_dims(m, d_model)?;
    let values = (0..m * d_model).map(|k| (k / d_model) as f64 / m as f64).collect();
    Ok(RpeTable { m, d_model, kind: RpeKind::Linear, sine_mode: None, values })
}

fn sine_values(m: usize, d_model: usize, mode: SineMode) -> Result<Vec<f64>> {
    check_dims(m, d_model)?;
    if d_model % 2 != 0 {
        return Err(Error::Config(format!("sine encoding needs an even d_model, got {d_model}")));
    }
    let mut values = vec![0.0; m * d_model];
    for i in 0..m {
        for pair in 0..d_model / 2 {
            let angle = match mode {
                SineMode::Standard => i as f64 / 10000f64.powf(2.0 * pair as f64 / d_model as f64),
                SineMode::AsWritten => pair as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64),
            };
            values[i * d_model + 2 * pair] = angle.sin();
            values[i * d_model + 2 * pair + 1] = angle.cos();
        }
    }
    Ok(values)
}

pub fn rpe_sine(m: usize, d_model: usize, mode: SineMode) -> Result<RpeTable> {
    let values = sine_values(m, d_model, mode)?;
    Ok(RpeTable { m, d_model, kind: RpeKind::Sine, sine_mode: Some(mode), values })
}

/// Sine table min-max normalized per channel to [0, 1]. Constant channels
/// (always the case when `m == 1`) map to 0.5.
pub fn rpe_sine_norm(m: usize, d_model: usize, mode: SineMode) -> Result<RpeTable> {
    let mut values = sine_values(m, d_model, mode)?;
    for ch in 0..d_model {
        let col = (0..m).map(|i| values[i * d_model + ch]);
        let lo = col.clone().fold(f64::INFINITY, f64::min);
        let hi = col.fold(f64::NEG_INFINITY, f64::max);
        for i in 0..m {
            let v = &mut values[i * d_model + ch];
            *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.5 };
        }
    }
    Ok(RpeTable { m, d_model, kind: RpeKind::SineNorm, sine_mode: Some(mode), values })
}

/// I.i.d. standard normal table, drawn once from the seeded noise stream.
pub fn rpe_noise(m: usize, d_model: usize, seed: u64) -> Result<RpeTable> {
    check_dims(m, d_model)?;
    let values = rng::normals(&mut rng::stream(seed, "rpe-noise"), m * d_model);
    Ok(RpeTable { m, d_model, kind: RpeKind::Noise, sine_mode: None, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_single_row_is_zero() {
        let t = rpe_linear(1, 3).unwrap();
        assert_eq!(t.values(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn linear_last_row_below_one() {
        for m in [1, 2, 7, 34, 1000] {
            let t = rpe_linear(m, 2).unwrap();
            let last = t.get(m - 1, 1);
            assert_eq!(last, (m - 1) as f64 / m as f64);
            assert!(last < 1.0);
        }
    }

    #[test]
    fn odd_d_model_rejected_for_sine() {
        assert!(matches!(rpe_sine(4, 3, SineMode::Standard), Err(Error::Config(_))));
        assert!(matches!(rpe_sine_norm(4, 5, SineMode::AsWritten), Err(Error::Config(_))));
    }

    #[test]
    fn degenerate_single_row_sine_norm_is_half() {
        let t = rpe_sine_norm(1, 4, SineMode::Standard).unwrap();
        assert!(t.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn tensor_layout_puts_rows_on_height() {
        let t = rpe_linear(4, 2).unwrap().to_tensor::<f64>();
        assert_eq!(t.shape(), &[1, 2, 4, 1]);
        assert_eq!(t.at4(0, 1, 3, 0), 0.75);
    }

    #[test]
    fn csv_has_one_line_per_row() {
        let csv = rpe_sine(3, 4, SineMode::Standard).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].split(',').count(), 4);
        let back: f64 = lines[2].split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(back, rpe_sine(3, 4, SineMode::Standard).unwrap().get(2, 3));
    }

    #[test]
    fn kind_parses_round_trip() {
        for k in RpeKind::ALL {
            assert_eq!(k.as_str().parse::<RpeKind>().unwrap(), k);
        }
        assert!("cosine".parse::<RpeKind>().is_err());
    }
}
