//! Segmentation metrics from a confusion matrix.

use std::fmt::Write as _;

use crate::cloud::{PointCloud, IGNORE_LABEL};
use crate::error::{Error, Result};

use super::model::{argmax_rows, forward, point_features, ModelParams};

/// Per-class IoU / recall and their means.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `confusion[gt][pred]`.
    pub confusion: Vec<Vec<u64>>,
    /// `None` for classes absent from both predictions and ground truth.
    pub iou: Vec<Option<f64>>,
    /// `None` for classes absent from the ground truth.
    pub recall: Vec<Option<f64>>,
    pub miou: f64,
    pub macc: f64,
}

impl EvalReport {
    pub fn from_predictions(predictions: &[u16], ground_truth: &[u16], num_classes: usize) -> Result<Self> {
        if predictions.len() != ground_truth.len() {
            return Err(Error::InvalidArgument("prediction and label counts differ".into()));
        }
        let mut confusion = vec![vec![0u64; num_classes]; num_classes];
        for (&p, &g) in predictions.iter().zip(ground_truth) {
            if g == IGNORE_LABEL {
                continue;
            }
            let (p, g) = (usize::from(p), usize::from(g));
            if p >= num_classes || g >= num_classes {
                return Err(Error::InvalidArgument(format!(
                    "class id {} is not below {num_classes}",
                    p.max(g)
                )));
            }
            confusion[g][p] += 1;
        }
        Ok(Self::from_confusion(confusion))
    }

    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Self {
        let c = confusion.len();
        let mut iou = Vec::with_capacity(c);
        let mut recall = Vec::with_capacity(c);
        for k in 0..c {
            let tp = confusion[k][k];
            let fn_: u64 = confusion[k].iter().sum::<u64>() - tp;
            let fp: u64 = (0..c).map(|g| confusion[g][k]).sum::<u64>() - tp;
            let denom = tp + fp + fn_;
            iou.push((denom > 0).then(|| tp as f64 / denom as f64));
            recall.push((tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64));
        }
        let mean = |v: &[Option<f64>]| {
            let present: Vec<f64> = v.iter().flatten().copied().collect();
            if present.is_empty() {
                0.0
            } else {
                present.iter().sum::<f64>() / present.len() as f64
            }
        };
        Self {
            miou: mean(&iou),
            macc: mean(&recall),
            confusion,
            iou,
            recall,
        }
    }

    /// `class,iou,recall` rows followed by `mean` with mIoU and mAcc.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("class,iou,recall\n");
        let fmt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
        for (k, (iou, rec)) in self.iou.iter().zip(&self.recall).enumerate() {
            let name = names.get(k).cloned().unwrap_or_else(|| format!("class_{k}"));
            let _ = writeln!(out, "{name},{},{}", fmt(*iou), fmt(*rec));
        }
        let _ = writeln!(out, "mean,{:.6},{:.6}", self.miou, self.macc);
        out
    }
}

/// Argmax class of every point.
pub fn predict(model: &ModelParams, cloud: &PointCloud) -> Vec<u16> {
    let with_painted = model.feature_dim() > super::model::BASE_FEATURES;
    let probs = forward(model, point_features(cloud, with_painted).view());
    argmax_rows(probs.view()).into_iter().map(|c| c as u16).collect()
}

/// Pools the confusion matrix over every point of every scan.
pub fn evaluate(model: &ModelParams, clouds: &[PointCloud]) -> Result<EvalReport> {
    let c = model.num_classes();
    if model.feature_dim() < super::model::BASE_FEATURES {
        return Err(Error::InvalidInput(format!(
            "model takes {} features, at least {} expected",
            model.feature_dim(),
            super::model::BASE_FEATURES
        )));
    }
    let mut confusion = vec![vec![0u64; c]; c];
    for (s, cloud) in clouds.iter().enumerate() {
        let labels = cloud
            .labels()
            .ok_or_else(|| Error::InvalidInput(format!("scan {s} has no labels")))?;
        let expected = model.feature_dim() - super::model::BASE_FEATURES;
        if expected > 0 && cloud.painted_dim() != expected {
            return Err(Error::InvalidInput(format!(
                "model expects {expected} painted channels, scan {s} has {}",
                cloud.painted_dim()
            )));
        }
        let one = EvalReport::from_predictions(&predict(model, cloud), labels, c)?;
        for (row, add) in confusion.iter_mut().zip(one.confusion) {
            for (a, b) in row.iter_mut().zip(add) {
                *a += b;
            }
        }
    }
    Ok(EvalReport::from_confusion(confusion))
}
