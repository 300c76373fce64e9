//! Training objectives and their analytic gradients with respect to logits.

use ndarray::{Array2, ArrayView2};

use crate::camera::masked_cosine_loss;
use crate::cloud::{Painted, IGNORE_LABEL};
use crate::error::{Error, Result};

use super::model::{argmax_rows, ModelParams};

/// Scalar loss plus its gradient with respect to the logits it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad_logits: Array2<f64>,
}

/// Mean `-ln p_label` over non-ignored points. The logit gradient is
/// `(p - onehot) / N_valid` on those points and zero elsewhere.
pub fn cross_entropy_loss(probs: ArrayView2<'_, f64>, labels: &[u16]) -> Result<LossGrad> {
    if labels.len() != probs.nrows() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} rows",
            labels.len(),
            probs.nrows()
        )));
    }
    let classes = probs.ncols();
    let valid = labels.iter().filter(|&&l| l != IGNORE_LABEL).count();
    if valid == 0 {
        return Err(Error::EmptyInput("no labeled points for cross-entropy".into()));
    }
    let inv = 1.0 / valid as f64;
    let mut grad = Array2::zeros(probs.raw_dim());
    let mut loss = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        if l == IGNORE_LABEL {
            continue;
        }
        let c = usize::from(l);
        if c >= classes {
            return Err(Error::InvalidArgument(format!("label {l} is not below {classes}")));
        }
        loss -= probs[[i, c]].max(f64::MIN_POSITIVE).ln();
        let mut row = grad.row_mut(i);
        row.assign(&probs.row(i));
        row[c] -= 1.0;
        row *= inv;
    }
    Ok(LossGrad {
        loss: loss * inv,
        grad_logits: grad,
    })
}

/// Backpropagates `dL/dp` through a row-wise softmax: `p ⊙ (g - <g, p>)`.
pub fn softmax_backward(probs: ArrayView2<'_, f64>, grad_probs: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros(probs.raw_dim());
    for ((p, g), mut o) in probs.rows().into_iter().zip(grad_probs.rows()).zip(out.rows_mut()) {
        let inner = p.dot(&g);
        for k in 0..p.len() {
            o[k] = p[k] * (g[k] - inner);
        }
    }
    out
}

/// Mean squared L2 distance between student and teacher probability rows.
/// The teacher is treated as a constant.
pub fn mean_teacher_loss(student_probs: ArrayView2<'_, f64>, teacher_probs: ArrayView2<'_, f64>) -> Result<LossGrad> {
    if student_probs.dim() != teacher_probs.dim() {
        return Err(Error::InvalidArgument("student and teacher shapes differ".into()));
    }
    let n = student_probs.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("no points for mean-teacher loss".into()));
    }
    let diff = &student_probs - &teacher_probs;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n as f64;
    let grad_probs = diff * (2.0 / n as f64);
    Ok(LossGrad {
        loss,
        grad_logits: softmax_backward(student_probs, grad_probs.view()),
    })
}

/// Masked cosine distance between the student's logits and text-aligned
/// image scores.
pub fn lkg_loss(student_logits: ArrayView2<'_, f64>, text_scores: ArrayView2<'_, f64>, mask: &[bool]) -> Result<LossGrad> {
    let out = masked_cosine_loss(student_logits, text_scores, mask)?;
    Ok(LossGrad {
        loss: out.loss,
        grad_logits: out.grad,
    })
}

/// Camera-to-LiDAR distillation through the model's projection head.
#[derive(Debug, Clone, PartialEq)]
pub struct C2lGrad {
    pub loss: f64,
    pub grad_logits: Array2<f64>,
    pub grad_projection: Array2<f64>,
}

/// Masked cosine distance between projected logits and painted image features.
pub fn c2l_loss(
    model: &ModelParams,
    logits: ArrayView2<'_, f64>,
    image_features: ArrayView2<'_, f64>,
    mask: &[bool],
) -> Result<C2lGrad> {
    let proj = model
        .projection
        .as_ref()
        .ok_or_else(|| Error::Config("camera distillation needs a projection head".into()))?;
    let embedded = model.project(logits).expect("projection present");
    let out = masked_cosine_loss(embedded.view(), image_features, mask)?;
    // F = z P^T (+ z): dL/dP = G^T z, dL/dz = G P (+ G)
    let grad_projection = out.grad.t().dot(&logits);
    let mut grad_logits = out.grad.dot(proj);
    if proj.nrows() == proj.ncols() {
        grad_logits += &out.grad;
    }
    Ok(C2lGrad {
        loss: out.loss,
        grad_logits,
        grad_projection,
    })
}

/// Nonnegative loss weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub mix: f64,
    pub mt: f64,
    pub c2l: f64,
    pub lkg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mix: 2.0,
            mt: 250.0,
            c2l: 1.5,
            lkg: 1.0,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            mix: 0.0,
            mt: 0.0,
            c2l: 0.0,
            lkg: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mix", self.mix), ("mt", self.mt), ("c2l", self.c2l), ("lkg", self.lkg)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("weight.{name} must be a nonnegative number")));
            }
        }
        Ok(())
    }
}

/// Loss components of one batch or epoch. Absent terms are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub sup: f64,
    pub mix: Option<f64>,
    pub mt: Option<f64>,
    pub c2l: Option<f64>,
    pub lkg: Option<f64>,
    pub total: f64,
}

impl LossReport {
    /// Fills in `total` from the components.
    pub fn finish(mut self, weights: &LossWeights) -> Self {
        self.total = total_loss(&self, weights);
        self
    }

    pub const CSV_HEADER: &'static str = "epoch,sup,mix,mt,c2l,lkg,total,has_mix,has_mt,has_c2l,has_lkg";

    pub fn csv_row(&self, epoch: usize) -> String {
        let v = |x: Option<f64>| x.unwrap_or(0.0);
        let f = |x: Option<f64>| u8::from(x.is_some());
        format!(
            "{epoch},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{},{},{},{}",
            self.sup,
            v(self.mix),
            v(self.mt),
            v(self.c2l),
            v(self.lkg),
            self.total,
            f(self.mix),
            f(self.mt),
            f(self.c2l),
            f(self.lkg)
        )
    }
}

/// `sup + λ_mix·mix + λ_mt·mt + λ_c2l·c2l + λ_lkg·lkg`, absent terms counting as 0.
pub fn total_loss(report: &LossReport, weights: &LossWeights) -> f64 {
    let v = |x: Option<f64>| x.unwrap_or(0.0);
    report.sup
        + weights.mix * v(report.mix)
        + weights.mt * v(report.mt)
        + weights.c2l * v(report.c2l)
        + weights.lkg * v(report.lkg)
}

/// Teacher predictions turned into hard labels with a confidence gate.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabels {
    pub labels: Vec<u16>,
    pub keep: Vec<bool>,
    pub threshold: f64,
}

impl PseudoLabels {
    /// Labels with rejected points replaced by [`IGNORE_LABEL`].
    pub fn masked(&self) -> Vec<u16> {
        self.labels
            .iter()
            .zip(&self.keep)
            .map(|(&l, &k)| if k { l } else { IGNORE_LABEL })
            .collect()
    }
}

pub fn generate_pseudo_labels(teacher_probs: ArrayView2<'_, f64>, threshold: f64) -> Result<PseudoLabels> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} outside [0, 1]")));
    }
    let best = argmax_rows(teacher_probs);
    let keep = best
        .iter()
        .enumerate()
        .map(|(i, &c)| teacher_probs[[i, c]] >= threshold)
        .collect();
    Ok(PseudoLabels {
        labels: best.iter().map(|&c| c as u16).collect(),
        keep,
        threshold,
    })
}

/// Source of per-point text-aligned class scores for the language-guidance loss.
pub trait TextScoreProvider {
    /// `(N x C scores, validity mask)` for painted points.
    fn scores(&self, painted: &Painted) -> Result<(Array2<f64>, Vec<bool>)>;
}

/// Scores painted image features against a fixed per-class prototype table.
///
/// The painted layout is `D` feature channels followed by a validity channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeScores {
    prototypes: Array2<f64>,
}

impl PrototypeScores {
    /// `prototypes` is `C x D`.
    pub fn new(prototypes: Array2<f64>) -> Result<Self> {
        if prototypes.is_empty() || prototypes.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("prototype table must be non-empty and finite".into()));
        }
        Ok(Self { prototypes })
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.prototypes.ncols()
    }

    pub fn prototypes(&self) -> &Array2<f64> {
        &self.prototypes
    }
}

/// Splits painted channels into the `N x D` image features and the validity mask.
pub fn split_painted(painted: &Painted) -> Result<(Array2<f64>, Vec<bool>)> {
    let dim = painted.dim();
    if dim < 2 {
        return Err(Error::InvalidInput(
            "painted channels need at least one feature plus the validity flag".into(),
        ));
    }
    let n = painted.len();
    let mut feats = Array2::zeros((n, dim - 1));
    let mut mask = Vec::with_capacity(n);
    for i in 0..n {
        let row = painted.row(i);
        for k in 0..dim - 1 {
            feats[[i, k]] = row[k];
        }
        mask.push(row[dim - 1] > 0.5);
    }
    Ok((feats, mask))
}

impl TextScoreProvider for PrototypeScores {
    fn scores(&self, painted: &Painted) -> Result<(Array2<f64>, Vec<bool>)> {
        let (feats, mask) = split_painted(painted)?;
        if feats.ncols() != self.feature_dim() {
            return Err(Error::InvalidArgument(format!(
                "painted features have {} channels, prototypes {}",
                feats.ncols(),
                self.feature_dim()
            )));
        }
        Ok((feats.dot(&self.prototypes.t()), mask))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cross_entropy_examples() {
        let p = array![[0.5, 0.5]];
        let out = cross_entropy_loss(p.view(), &[0]).unwrap();
        assert!((out.loss - 2f64.ln()).abs() < 1e-15);
        assert_eq!(out.grad_logits, array![[-0.5, 0.5]]);

        let perfect = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(cross_entropy_loss(perfect.view(), &[0, 1]).unwrap().loss <= 1e-12);

        let out = cross_entropy_loss(p.view(), &[IGNORE_LABEL]);
        assert!(matches!(out, Err(Error::EmptyInput(_))));

        let two = array![[0.5, 0.5], [0.9, 0.1]];
        let out = cross_entropy_loss(two.view(), &[1, IGNORE_LABEL]).unwrap();
        assert_eq!(out.grad_logits.row(1).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn mean_teacher_examples() {
        let a = array![[0.3, 0.7]];
        assert_eq!(mean_teacher_loss(a.view(), a.view()).unwrap().loss, 0.0);
        let s = array![[1.0, 0.0]];
        let t = array![[0.0, 1.0]];
        assert_eq!(mean_teacher_loss(s.view(), t.view()).unwrap().loss, 2.0);
    }

    #[test]
    fn lkg_examples() {
        let a = array![[1.0, -2.0, 0.5]];
        assert!(lkg_loss(a.view(), a.view(), &[true]).unwrap().loss.abs() < 1e-15);
        let b = array![[2.0, 1.0, 0.0]];
        assert!((lkg_loss(a.view(), b.view(), &[true]).unwrap().loss - 1.0).abs() < 1e-15);
        assert!(lkg_loss(a.view(), b.view(), &[false]).is_err());
    }

    #[test]
    fn total_loss_examples() {
        let all_ones = LossReport {
            sup: 1.0,
            mix: Some(1.0),
            mt: Some(1.0),
            c2l: Some(1.0),
            lkg: Some(1.0),
            total: 0.0,
        };
        assert_eq!(total_loss(&all_ones, &LossWeights::default()), 255.5);
        assert_eq!(total_loss(&all_ones, &LossWeights::zero()), 1.0);
        let no_lkg = LossReport { lkg: None, ..all_ones };
        assert_eq!(total_loss(&no_lkg, &LossWeights::default()), 254.5);
    }

    #[test]
    fn pseudo_label_examples() {
        let p = array![[0.95, 0.05], [0.6, 0.4], [0.5, 0.5]];
        let pl = generate_pseudo_labels(p.view(), 0.9).unwrap();
        assert_eq!(pl.labels, vec![0, 0, 0]);
        assert_eq!(pl.keep, vec![true, false, false]);
        assert_eq!(pl.masked(), vec![0, IGNORE_LABEL, IGNORE_LABEL]);
        let all = generate_pseudo_labels(p.view(), 0.0).unwrap();
        assert!(all.keep.iter().all(|&k| k));
        assert!(generate_pseudo_labels(p.view(), 1.1).is_err());
    }

    #[test]
    fn prototype_scores() {
        let provider = PrototypeScores::new(array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let painted = Painted::new(3, vec![2.0, 3.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let (scores, mask) = provider.scores(&painted).unwrap();
        assert_eq!(scores, array![[2.0, 3.0, 5.0], [0.0, 0.0, 0.0]]);
        assert_eq!(mask, vec![true, false]);
        let narrow = Painted::new(2, vec![1.0, 1.0]).unwrap();
        assert!(provider.scores(&narrow).is_err());
    }
}
