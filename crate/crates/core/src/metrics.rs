//! Confusion-matrix evaluation.
//!
//! Entry `[p][g]` counts pixels of ground-truth class `g` predicted as `p`.
//! Per class `c`, with `gt_c` the column sum and `pred_c` the row sum:
//!
//! ```text
//! IOU_c  = cm[c][c] / (gt_c + pred_c − cm[c][c])
//! ACC_c  = cm[c][c] / gt_c              (recall)
//! prec_c = cm[c][c] / pred_c
//! F_c    = 2·prec_c·ACC_c / (prec_c + ACC_c)
//! aACC   = trace / total
//! ```
//!
//! Means run over classes present in the ground truth or the prediction.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::losses::{LabelMap, IGNORE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix { k, counts: vec![0; k * k] }
    }

    /// Builds a matrix from rows indexed by prediction.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Contract("confusion matrix rows must form a square".into()));
        }
        Ok(ConfusionMatrix { k, counts: rows.concat() })
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, pred: usize, gt: usize) -> u64 {
        self.counts[pred * self.k + gt]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        if pred.dims() != gt.dims() {
            return Err(Error::Contract(format!("prediction {:?} and ground truth {:?} differ in size", pred.dims(), gt.dims())));
        }
        if let Some(&p) = pred.data().iter().find(|&&p| p as usize >= self.k) {
            return Err(Error::Contract(format!("prediction holds {p}, not a class id below {}", self.k)));
        }
        if let Some(&g) = gt.data().iter().find(|&&g| g != IGNORE && g as usize >= self.k) {
            return Err(Error::Contract(format!("ground truth holds {g}, not a class id below {}", self.k)));
        }
        for (&p, &g) in pred.data().iter().zip(gt.data()) {
            if g != IGNORE {
                self.counts[p as usize * self.k + g as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.k != self.k {
            return Err(Error::Contract(format!("cannot merge {}-class and {}-class matrices", self.k, other.k)));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Per-class scores and their means, all in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub class_names: Vec<String>,
    /// Whether a class enters the means.
    pub included: Vec<bool>,
    pub iou: Vec<f64>,
    pub acc: Vec<f64>,
    pub precision: Vec<f64>,
    pub fscore: Vec<f64>,
    pub miou: f64,
    pub macc: f64,
    pub aacc: f64,
    pub mfscore: f64,
    pub gt_pixels: Vec<u64>,
    pub total_pixels: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn masked_mean(values: &[f64], included: &[bool]) -> f64 {
    let (sum, n) = values
        .iter()
        .zip(included)
        .filter(|(_, &inc)| inc)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn default_class_names(k: usize) -> Vec<String> {
    (0..k).map(|c| format!("class{c}")).collect()
}

pub fn compute_report(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let k = cm.k;
    let total = cm.total();
    if total == 0 {
        return Err(Error::Data("no valid pixels were evaluated".into()));
    }
    let gt: Vec<u64> = (0..k).map(|c| (0..k).map(|p| cm.get(p, c)).sum()).collect();
    let pred: Vec<u64> = (0..k).map(|c| (0..k).map(|g| cm.get(c, g)).sum()).collect();
    let tp: Vec<u64> = (0..k).map(|c| cm.get(c, c)).collect();
    let included: Vec<bool> = (0..k).map(|c| gt[c] > 0 || pred[c] > 0).collect();
    let iou: Vec<f64> = (0..k).map(|c| ratio(tp[c], gt[c] + pred[c] - tp[c])).collect();
    let acc: Vec<f64> = (0..k).map(|c| ratio(tp[c], gt[c])).collect();
    let precision: Vec<f64> = (0..k).map(|c| ratio(tp[c], pred[c])).collect();
    let fscore: Vec<f64> = (0..k)
        .map(|c| {
            let (p, r) = (precision[c], acc[c]);
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        })
        .collect();
    Ok(MetricsReport {
        class_names: default_class_names(k),
        miou: masked_mean(&iou, &included),
        macc: masked_mean(&acc, &included),
        mfscore: masked_mean(&fscore, &included),
        aacc: ratio(tp.iter().sum(), total),
        included,
        iou,
        acc,
        precision,
        fscore,
        gt_pixels: gt,
        total_pixels: total,
    })
}

impl MetricsReport {
    pub fn with_names(mut self, names: &[String]) -> Result<Self> {
        if names.len() != self.iou.len() {
            return Err(Error::Contract(format!("{} class names for a {}-class report", names.len(), self.iou.len())));
        }
        self.class_names = names.to_vec();
        Ok(self)
    }

    /// Column names and values in report order; excluded classes are `None`.
    pub fn columns(&self) -> Vec<(String, Option<f64>)> {
        let block = |prefix: &str, values: &[f64]| -> Vec<(String, Option<f64>)> {
            self.class_names
                .iter()
                .zip(values)
                .zip(&self.included)
                .map(|((n, &v), &inc)| (format!("{prefix}_{n}"), inc.then_some(v)))
                .collect()
        };
        let mut cols = block("IOU", &self.iou);
        cols.push(("mIOU".into(), Some(self.miou)));
        cols.extend(block("ACC", &self.acc));
        cols.push(("mACC".into(), Some(self.macc)));
        cols.push(("aACC".into(), Some(self.aacc)));
        cols.extend(block("F", &self.fscore));
        cols.push(("mF".into(), Some(self.mfscore)));
        cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportStyle {
    Text,
    Csv,
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{:.2}", 100.0 * v),
        None => "-".into(),
    }
}

/// Percentages with two decimals; `-` marks classes excluded from the means.
pub fn format_report(report: &MetricsReport, style: ReportStyle) -> String {
    let cols = report.columns();
    match style {
        ReportStyle::Csv => {
            let header: Vec<&str> = cols.iter().map(|(n, _)| n.as_str()).collect();
            let values: Vec<String> = cols.iter().map(|(_, v)| cell(*v)).collect();
            format!("{}\n{}\n", header.join(","), values.join(","))
        }
        ReportStyle::Text => {
            let mut out = String::new();
            let width = cols.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
            for (name, v) in &cols {
                let _ = writeln!(out, "{name:<width$}  {:>7}", cell(*v));
            }
            let _ = writeln!(out, "{:<width$}  {:>7}", "pixels", report.total_pixels);
            out
        }
    }
}

/// Parses the two-line CSV written by [`format_report`] into `(column, value)`
/// pairs, values as fractions.
pub fn parse_report_csv(text: &str) -> Result<Vec<(String, Option<f64>)>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let (Some(header), Some(values)) = (lines.next(), lines.next()) else {
        return Err(Error::Data("report CSV needs a header and a value line".into()));
    };
    let names: Vec<&str> = header.split(',').collect();
    let cells: Vec<&str> = values.split(',').collect();
    if names.len() != cells.len() {
        return Err(Error::Data(format!("report CSV has {} columns but {} values", names.len(), cells.len())));
    }
    names
        .iter()
        .zip(cells)
        .map(|(n, c)| {
            let v = match c.trim() {
                "-" => None,
                s => Some(s.parse::<f64>().map_err(|_| Error::Data(format!("bad report value '{s}' in column {n}")))? / 100.0),
            };
            Ok((n.to_string(), v))
        })
        .collect()
}
