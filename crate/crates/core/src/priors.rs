//! Spatial-prior statistics: how class frequencies depend on the beam area.
//!
//! All entropies are in nats with `0 · ln 0 = 0`.

use std::fmt::Write as _;

use ndarray::ArrayView2;

use crate::cloud::{PointCloud, IGNORE_LABEL};
use crate::error::{Error, Result};
use crate::geometry::{assign_areas, azimuth_column, azimuth_unchecked, BeamPartition};

/// Per-class proportions and area distributions over a set of labeled scans.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorReport {
    /// Valid (non-ignored) point count per class.
    pub class_counts: Vec<u64>,
    /// `count(c) / total valid`.
    pub class_proportions: Vec<f64>,
    /// `area_distributions[c][k] = count(c, k) / count(c)`; zero rows for absent classes.
    pub area_distributions: Vec<Vec<f64>>,
    /// `H(Y | A)` in nats.
    pub conditional_entropy: f64,
    /// `H(Y)` in nats.
    pub marginal_entropy: f64,
}

impl PriorReport {
    pub fn num_classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn areas(&self) -> usize {
        self.area_distributions.first().map_or(0, Vec::len)
    }

    /// CSV with one row per class: `name,proportion,area_0,...,area_{m-1}`.
    /// Missing names default to `class_<id>`.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("name,proportion");
        for k in 0..self.areas() {
            let _ = write!(out, ",area_{k}");
        }
        out.push('\n');
        for c in 0..self.num_classes() {
            match names.get(c) {
                Some(name) => out.push_str(name),
                None => {
                    let _ = write!(out, "class_{c}");
                }
            }
            let _ = write!(out, ",{:.6}", self.class_proportions[c]);
            for v in &self.area_distributions[c] {
                let _ = write!(out, ",{v:.6}");
            }
            out.push('\n');
        }
        out
    }
}

fn xlogx_sum(counts: &[u64], total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Shannon entropy of a probability row.
pub fn entropy(row: impl IntoIterator<Item = f64>) -> f64 {
    row.into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

/// Joint class-by-area histogram.
struct Histogram {
    counts: Vec<Vec<u64>>,
}

impl Histogram {
    fn new(num_classes: usize, areas: usize) -> Self {
        Self {
            counts: vec![vec![0; areas]; num_classes],
        }
    }

    fn add(&mut self, labels: &[u16], areas: &[usize]) -> Result<()> {
        let num_classes = self.counts.len();
        for (&l, &a) in labels.iter().zip(areas) {
            if l == IGNORE_LABEL {
                continue;
            }
            let c = usize::from(l);
            if c >= num_classes {
                return Err(Error::InvalidInput(format!(
                    "label {l} is not below {num_classes}"
                )));
            }
            self.counts[c][a] += 1;
        }
        Ok(())
    }

    fn class_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    fn total(&self) -> u64 {
        self.class_totals().iter().sum()
    }

    fn marginal_entropy(&self) -> f64 {
        xlogx_sum(&self.class_totals(), self.total())
    }

    fn conditional_entropy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let areas = self.counts.first().map_or(0, Vec::len);
        (0..areas)
            .map(|k| {
                let column: Vec<u64> = self.counts.iter().map(|row| row[k]).collect();
                let nk: u64 = column.iter().sum();
                nk as f64 / total as f64 * xlogx_sum(&column, nk)
            })
            .sum()
    }
}

/// Class proportions, per-class area distributions and label entropies.
pub fn class_area_distribution(
    clouds: &[PointCloud],
    partition: &BeamPartition,
    num_classes: usize,
) -> Result<PriorReport> {
    let mut hist = Histogram::new(num_classes, partition.areas());
    for (s, cloud) in clouds.iter().enumerate() {
        let labels = cloud
            .labels()
            .ok_or_else(|| Error::InvalidInput(format!("scan {s} has no labels")))?;
        hist.add(labels, &assign_areas(cloud, partition))?;
    }
    let totals = hist.class_totals();
    let total: u64 = totals.iter().sum();
    if total == 0 {
        return Err(Error::EmptyInput("no labeled points".into()));
    }
    let area_distributions = hist
        .counts
        .iter()
        .zip(&totals)
        .map(|(row, &t)| {
            row.iter()
                .map(|&c| if t == 0 { 0.0 } else { c as f64 / t as f64 })
                .collect()
        })
        .collect();
    Ok(PriorReport {
        class_proportions: totals.iter().map(|&t| t as f64 / total as f64).collect(),
        area_distributions,
        conditional_entropy: hist.conditional_entropy(),
        marginal_entropy: hist.marginal_entropy(),
        class_counts: totals,
    })
}

/// Mean predictive entropy of per-point distributions, averaged per area and
/// then weighted by area size (the plain point average).
pub fn empirical_conditional_entropy(
    probs: ArrayView2<'_, f64>,
    areas: &[usize],
    m: usize,
) -> Result<f64> {
    if probs.nrows() == 0 {
        return Err(Error::EmptyInput("no points".into()));
    }
    if areas.len() != probs.nrows() {
        return Err(Error::InvalidArgument(format!(
            "{} area indices for {} rows",
            areas.len(),
            probs.nrows()
        )));
    }
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for (i, row) in probs.rows().into_iter().enumerate() {
        let total: f64 = row.sum();
        if (total - 1.0).abs() > 1e-6 || row.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidInput(format!(
                "row {i} is not a probability distribution (sum {total})"
            )));
        }
        let a = areas[i];
        if a >= m {
            return Err(Error::InvalidArgument(format!("area {a} at row {i} is not below {m}")));
        }
        sums[a] += entropy(row.iter().copied());
        counts[a] += 1;
    }
    let n = probs.nrows() as f64;
    Ok((0..m)
        .filter(|&k| counts[k] > 0)
        .map(|k| counts[k] as f64 / n * (sums[k] / counts[k] as f64))
        .sum())
}

/// `(H(Y), H(Y | A))` of labels grouped by area. Ignored labels are skipped.
pub fn label_entropy_given_areas(
    labels: &[u16],
    areas: &[usize],
    m: usize,
    num_classes: usize,
) -> Result<(f64, f64)> {
    if labels.len() != areas.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} areas",
            labels.len(),
            areas.len()
        )));
    }
    if let Some(&a) = areas.iter().find(|&&a| a >= m) {
        return Err(Error::InvalidArgument(format!("area {a} is not below {m}")));
    }
    let mut hist = Histogram::new(num_classes, m);
    hist.add(labels, areas)?;
    if hist.total() == 0 {
        return Err(Error::EmptyInput("no labeled points".into()));
    }
    Ok((hist.marginal_entropy(), hist.conditional_entropy()))
}

/// Range-view occupancy likelihood of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    /// Row-major, row 0 = lowest beam area.
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn row_mean(&self, row: usize) -> f64 {
        self.values[row * self.width..(row + 1) * self.width].iter().sum::<f64>() / self.width as f64
    }

    /// Binary graymap (P5), 8-bit, value 1 -> 255. The lowest beam area is
    /// drawn at the bottom of the image.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        for row in (0..self.height).rev() {
            for col in 0..self.width {
                let v = self.get(row, col).clamp(0.0, 1.0);
                out.push((v * 255.0).round() as u8);
            }
        }
        out
    }
}

/// Fraction of scans in which `class_id` occupies each (area, azimuth column) cell.
pub fn prior_heatmap(
    clouds: &[PointCloud],
    partition: &BeamPartition,
    class_id: u16,
    width: usize,
    num_classes: usize,
) -> Result<Heatmap> {
    if usize::from(class_id) >= num_classes {
        return Err(Error::InvalidArgument(format!(
            "class {class_id} is not below {num_classes}"
        )));
    }
    if width == 0 {
        return Err(Error::InvalidArgument("heatmap width must be >= 1".into()));
    }
    let height = partition.areas();
    let mut hits = vec![0u32; height * width];
    let mut seen = vec![false; height * width];
    for (s, cloud) in clouds.iter().enumerate() {
        let labels = cloud
            .labels()
            .ok_or_else(|| Error::InvalidInput(format!("scan {s} has no labels")))?;
        seen.fill(false);
        for (&p, &l) in cloud.coords().iter().zip(labels) {
            if l != class_id {
                continue;
            }
            let row = partition.area_of(crate::geometry::inclination_unchecked(p));
            let col = azimuth_column(azimuth_unchecked(p), width);
            seen[row * width + col] = true;
        }
        for (h, &s) in hits.iter_mut().zip(&seen) {
            *h += u32::from(s);
        }
    }
    let scans = clouds.len().max(1) as f64;
    Ok(Heatmap {
        height,
        width,
        values: hits.iter().map(|&h| f64::from(h) / scans).collect(),
    })
}
