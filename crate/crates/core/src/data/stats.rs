//! Per-row class statistics: how many pixels of each class fall in each band
//! of row coordinates, and how each class count correlates with the row index.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::losses::{LabelMap, IGNORE};

#[derive(Debug, Clone, PartialEq)]
pub struct RowHistogram {
    pub classes: usize,
    /// `[start, end)` row ranges; the last absorbs the remainder.
    pub buckets: Vec<(usize, usize)>,
    /// Bucket × class pixel counts.
    pub counts: Vec<Vec<u64>>,
    /// Row × class pixel counts, summed over the dataset.
    pub per_row: Vec<Vec<u64>>,
    /// Pearson correlation of row index and per-row count; `None` when a
    /// count is constant over the rows.
    pub correlation: Vec<Option<f64>>,
}

/// Pearson correlation, `None` if either series has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Tallies label maps by absolute row index. Images of different heights
/// contribute to the rows they have.
pub fn row_histogram<'a>(maps: impl IntoIterator<Item = &'a LabelMap>, classes: usize, num_buckets: usize) -> Result<RowHistogram> {
    if num_buckets < 2 {
        return Err(Error::Config(format!("row statistics need at least 2 buckets, got {num_buckets}")));
    }
    let mut per_row: Vec<Vec<u64>> = Vec::new();
    let mut seen = false;
    for m in maps {
        seen = true;
        let (n, h, w) = m.dims();
        if per_row.len() < h {
            per_row.resize(h, vec![0; classes]);
        }
        for b in 0..n {
            for (y, row) in per_row.iter_mut().enumerate().take(h) {
                for x in 0..w {
                    let v = m.get(b, y, x);
                    if v == IGNORE {
                        continue;
                    }
                    let slot = row.get_mut(v as usize).ok_or_else(|| {
                        Error::Data(format!("label id {v} is not a class of a {classes}-class scheme"))
                    })?;
                    *slot += 1;
                }
            }
        }
    }
    if !seen {
        return Err(Error::Data("row statistics need at least one label map".into()));
    }
    let rows = per_row.len();
    if rows < num_buckets {
        return Err(Error::Config(format!("{rows} rows cannot fill {num_buckets} buckets")));
    }
    let size = rows / num_buckets;
    let buckets: Vec<(usize, usize)> =
        (0..num_buckets).map(|i| (i * size, if i + 1 == num_buckets { rows } else { (i + 1) * size })).collect();
    let counts = buckets
        .iter()
        .map(|&(s, e)| (0..classes).map(|c| per_row[s..e].iter().map(|r| r[c]).sum()).collect())
        .collect();
    let idx: Vec<f64> = (0..rows).map(|r| r as f64).collect();
    let correlation = (0..classes)
        .map(|c| {
            let series: Vec<f64> = per_row.iter().map(|r| r[c] as f64).collect();
            pearson(&idx, &series)
        })
        .collect();
    Ok(RowHistogram { classes, buckets, counts, per_row, correlation })
}

impl RowHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// `row_start,row_end,<class>...`, one line per bucket.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = format!("row_start,row_end,{}\n", names.join(","));
        for (&(s, e), counts) in self.buckets.iter().zip(&self.counts) {
            let cells: Vec<String> = counts.iter().map(u64::to_string).collect();
            let _ = writeln!(out, "{s},{e},{}", cells.join(","));
        }
        out
    }

    /// `class,pearson` with an empty cell where the correlation is undefined.
    pub fn correlation_csv(&self, names: &[String]) -> String {
        let mut out = String::from("class,pearson\n");
        for (n, r) in names.iter().zip(&self.correlation) {
            match r {
                Some(v) => writeln!(out, "{n},{v:.6}"),
                None => writeln!(out, "{n},"),
            }
            .expect("writing to a String");
        }
        out
    }
}
