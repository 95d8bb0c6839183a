//! Dataset I/O, augmentation, the synthetic scene generator and row statistics.

mod augment;
mod manifest;
pub mod netpbm;
mod stats;
mod synth;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::error::{Error, Result};
use crate::losses::{LabelMap, IGNORE};
use crate::tensor::{Real, Tensor};

pub use augment::{augment, hflip, resize_labels_nearest, AugmentConfig};
pub use manifest::Manifest;
pub use netpbm::{Pnm, PnmKind};
pub use stats::{pearson, row_histogram, RowHistogram};
pub use synth::{synth_scene, SynthConfig};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: expected magic {expected}, found '{found}'")]
    Magic { path: PathBuf, expected: &'static str, found: String },
    #[error("{path}: malformed header ({detail})")]
    Header { path: PathBuf, detail: String },
    #[error("{path}: maxval must be 255, got {maxval}")]
    MaxVal { path: PathBuf, maxval: usize },
    #[error("{path}: raster needs {expected} bytes, found {found}")]
    Truncated { path: PathBuf, expected: usize, found: usize },
    #[error("image is {image_h}x{image_w} but labels are {label_h}x{label_w}")]
    DimensionMismatch { image_h: usize, image_w: usize, label_h: usize, label_w: usize },
    #[error("{path}: label id {id} is neither below {classes} nor the ignore id 255")]
    LabelOutOfRange { path: PathBuf, id: u8, classes: usize },
    #[error("{path}:{line}: {detail}")]
    Manifest { path: PathBuf, line: usize, detail: String },
    #[error("{path}: manifest lists no samples")]
    EmptyManifest { path: PathBuf },
}

/// Class names in id order; [`IGNORE`] marks unlabeled pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassScheme {
    names: Vec<String>,
}

impl Default for ClassScheme {
    fn default() -> Self {
        ClassScheme { names: ["sea", "sky", "land", "obstacle", "tower", "ship"].map(String::from).to_vec() }
    }
}

impl ClassScheme {
    pub const SEA: u8 = 0;
    pub const SKY: u8 = 1;
    pub const LAND: u8 = 2;
    pub const OBSTACLE: u8 = 3;
    pub const TOWER: u8 = 4;
    pub const SHIP: u8 = 5;

    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.len() < 2 || names.len() > IGNORE as usize {
            return Err(Error::Config(format!("a class scheme needs 2 to 255 classes, got {}", names.len())));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.contains(',') || names[..i].contains(n) {
                return Err(Error::Config(format!("class name '{n}' is empty, contains a comma or repeats")));
            }
        }
        Ok(ClassScheme { names })
    }

    /// Comma-separated names.
    pub fn parse(list: &str) -> Result<Self> {
        Self::new(list.split(',').map(|s| s.trim().to_string()).collect())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<u8> {
        self.names.iter().position(|n| n == name).map(|i| i as u8)
    }
}

/// An RGB image in `[0, 1]` (3×H×W) with its labels (1×H×W).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Tensor<f32>,
    pub labels: LabelMap,
    pub id: String,
}

impl Sample {
    pub fn new(image: Tensor<f32>, labels: LabelMap, id: impl Into<String>) -> Result<Self> {
        let (h, w) = image_hw(&image)?;
        let (n, lh, lw) = labels.dims();
        if n != 1 || (lh, lw) != (h, w) {
            return Err(Error::Contract(format!("image {h}x{w} and labels {n}x{lh}x{lw} disagree")));
        }
        Ok(Sample { image, labels, id: id.into() })
    }

    pub fn height(&self) -> usize {
        self.labels.height()
    }

    pub fn width(&self) -> usize {
        self.labels.width()
    }
}

fn image_hw<T: Real>(image: &Tensor<T>) -> Result<(usize, usize)> {
    match image.shape() {
        [3, h, w] => Ok((*h, *w)),
        s => Err(Error::Contract(format!("an image must be 3xHxW, got {s:?}"))),
    }
}

/// Converts an interleaved RGB raster to a planar tensor in `[0, 1]`.
pub fn rgb_to_tensor(img: &Pnm) -> Tensor<f32> {
    let hw = img.width * img.height;
    let mut data = vec![0f32; 3 * hw];
    for p in 0..hw {
        for c in 0..3 {
            data[c * hw + p] = img.pixels[3 * p + c] as f32 / 255.0;
        }
    }
    Tensor::new(&[3, img.height, img.width], data).expect("raster size matches header")
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn tensor_to_rgb<T: Real>(image: &Tensor<T>) -> Result<Pnm> {
    let (h, w) = image_hw(image)?;
    let hw = h * w;
    let d = image.data();
    let pixels = (0..hw).flat_map(|p| (0..3).map(move |c| to_byte(d[c * hw + p].f64()))).collect();
    Ok(Pnm { kind: PnmKind::Rgb, width: w, height: h, pixels })
}

/// Reads a P5 label mask, checking ids against `classes`.
pub fn load_labels(path: &Path, classes: usize) -> Result<LabelMap, LoadError> {
    let img = netpbm::read(path, PnmKind::Gray)?;
    if let Some(&id) = img.pixels.iter().find(|&&v| v != IGNORE && v as usize >= classes) {
        return Err(LoadError::LabelOutOfRange { path: path.into(), id, classes });
    }
    Ok(LabelMap::new(1, img.height, img.width, img.pixels).expect("raster size matches header"))
}

/// Reads a P6 image and its P5 labels. Nothing is returned unless both parse
/// and agree in size.
pub fn load_sample(image_path: &Path, label_path: &Path, classes: usize) -> Result<Sample, LoadError> {
    let img = netpbm::read(image_path, PnmKind::Rgb)?;
    let labels = load_labels(label_path, classes)?;
    if (labels.height(), labels.width()) != (img.height, img.width) {
        return Err(LoadError::DimensionMismatch {
            image_h: img.height,
            image_w: img.width,
            label_h: labels.height(),
            label_w: labels.width(),
        });
    }
    let id = image_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Sample { image: rgb_to_tensor(&img), labels, id })
}

/// Writes the image as P6 (values rounded to the nearest of 256 levels) and the labels as P5.
pub fn write_sample(sample: &Sample, image_path: &Path, label_path: &Path) -> Result<()> {
    netpbm::write(image_path, &tensor_to_rgb(&sample.image)?)?;
    save_label_map(&sample.labels, label_path)
}

/// Writes a single-image label map as P5.
pub fn save_label_map(labels: &LabelMap, path: &Path) -> Result<()> {
    let (n, h, w) = labels.dims();
    if n != 1 {
        return Err(Error::Contract(format!("save_label_map writes one image, got a batch of {n}")));
    }
    Ok(netpbm::write(path, &Pnm { kind: PnmKind::Gray, width: w, height: h, pixels: labels.data().to_vec() })?)
}

/// Colormap of the confidence heatmap: `v ↦ (255·v, 64·(1−v), 64·(1−v))`,
/// each channel rounded to the nearest integer.
pub fn heat_color(v: f64) -> [u8; 3] {
    let cool = (64.0 * (1.0 - v)).round() as u8;
    [(255.0 * v).round() as u8, cool, cool]
}

/// Writes an H×W (or 1×1×H×W) map of probabilities as a P6 heatmap.
pub fn save_heatmap<T: Real>(probs: &Tensor<T>, path: &Path) -> Result<()> {
    let (h, w) = match probs.shape() {
        [h, w] | [1, 1, h, w] => (*h, *w),
        s => return Err(Error::Contract(format!("a heatmap needs an HxW map, got {s:?}"))),
    };
    let mut pixels = Vec::with_capacity(3 * h * w);
    for &p in probs.data() {
        let v = p.f64();
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Contract(format!("heatmap value {v} outside [0, 1]")));
        }
        pixels.extend(heat_color(v));
    }
    Ok(netpbm::write(path, &Pnm { kind: PnmKind::Rgb, width: w, height: h, pixels })?)
}

/// Stacks images into an N×3×H×W batch.
pub fn stack_images<T: Real>(samples: &[&Sample]) -> Result<Tensor<T>> {
    let first = samples.first().ok_or_else(|| Error::Contract("cannot batch zero samples".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(samples.len() * 3 * h * w);
    for s in samples {
        if (s.height(), s.width()) != (h, w) {
            return Err(Error::Contract(format!("batch mixes {h}x{w} and {}x{} samples", s.height(), s.width())));
        }
        data.extend(s.image.data().iter().map(|&v| T::of(v as f64)));
    }
    Tensor::new(&[samples.len(), 3, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_image_zero_labels() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("a.ppm"), dir.path().join("a.pgm"));
        std::fs::write(&ip, b"P6\n2 2\n255\n\0\0\0\0\0\0\0\0\0\0\0\0").unwrap();
        std::fs::write(&lp, b"P5\n2 2\n255\n\0\0\0\0").unwrap();
        let s = load_sample(&ip, &lp, 6).unwrap();
        assert!(s.image.data().iter().all(|&v| v == 0.0));
        assert!(s.labels.data().iter().all(|&v| v == 0));
        assert_eq!(s.id, "a");
    }

    #[test]
    fn mismatched_sizes_and_bad_ids() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("a.ppm"), dir.path().join("a.pgm"));
        std::fs::write(&ip, b"P6\n1 1\n255\n\0\0\0").unwrap();
        std::fs::write(&lp, b"P5\n2 1\n255\n\0\0").unwrap();
        assert!(matches!(load_sample(&ip, &lp, 6), Err(LoadError::DimensionMismatch { .. })));
        std::fs::write(&lp, b"P5\n1 1\n255\n\x07").unwrap();
        assert!(matches!(load_sample(&ip, &lp, 6), Err(LoadError::LabelOutOfRange { id: 7, .. })));
        std::fs::write(&lp, b"P5\n1 1\n255\n\xff").unwrap();
        assert!(load_sample(&ip, &lp, 6).is_ok());
    }

    #[test]
    fn heatmap_colors() {
        assert_eq!(heat_color(1.0), [255, 0, 0]);
        assert_eq!(heat_color(0.0), [0, 64, 64]);
        assert_eq!(heat_color(0.5), [128, 32, 32]);
    }

    #[test]
    fn scheme_rejects_duplicates() {
        assert!(ClassScheme::parse("sea,sky,sea").is_err());
        assert_eq!(ClassScheme::default().id("ship"), Some(ClassScheme::SHIP));
    }
}
