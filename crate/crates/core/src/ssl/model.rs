//! Linear softmax classifier over handcrafted per-point features.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::inclination_unchecked;

/// Metric features are divided by this many meters.
pub const FEATURE_SCALE_M: f64 = 10.0;

/// Geometric feature count: x, y, z, range, inclination, intensity.
pub const BASE_FEATURES: usize = 6;

/// Row-per-point feature matrix. Painted channels are appended when
/// `with_painted` is set.
pub fn point_features(cloud: &PointCloud, with_painted: bool) -> Array2<f64> {
    let extra = if with_painted { cloud.painted_dim() } else { 0 };
    let mut out = Array2::zeros((cloud.len(), BASE_FEATURES + extra));
    for (i, (&p, &intensity)) in cloud.coords().iter().zip(cloud.intensity()).enumerate() {
        let mut row = out.row_mut(i);
        row[0] = p[0] / FEATURE_SCALE_M;
        row[1] = p[1] / FEATURE_SCALE_M;
        row[2] = p[2] / FEATURE_SCALE_M;
        row[3] = cloud.range(i) / FEATURE_SCALE_M;
        row[4] = inclination_unchecked(p);
        row[5] = intensity;
        if extra > 0 {
            if let Some(painted) = cloud.painted() {
                for (k, &v) in painted.row(i).iter().enumerate() {
                    row[BASE_FEATURES + k] = v;
                }
            }
        }
    }
    out
}

/// Classifier weights (`C x d`), bias (`C`) and an optional `D x C`
/// projection head used by the camera distillation loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub projection: Option<Array2<f64>>,
}

impl ModelParams {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            weights: Array2::zeros((num_classes, dim)),
            bias: Array1::zeros(num_classes),
            projection: None,
        }
    }

    /// Small Gaussian weights, zero bias.
    pub fn seeded(num_classes: usize, dim: usize, std: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).expect("finite std");
        Self {
            weights: Array2::from_shape_simple_fn((num_classes, dim), || normal.sample(&mut rng)),
            bias: Array1::zeros(num_classes),
            projection: None,
        }
    }

    pub fn with_projection(mut self, projection: Array2<f64>) -> Result<Self> {
        if projection.ncols() != self.num_classes() {
            return Err(Error::InvalidArgument(format!(
                "projection has {} inputs, model has {} classes",
                projection.ncols(),
                self.num_classes()
            )));
        }
        self.projection = Some(projection);
        Ok(self)
    }

    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
            && self.projection.iter().flatten().all(|v| v.is_finite())
    }

    /// `W x + b` per row.
    pub fn logits(&self, features: ArrayView2<'_, f64>) -> Array2<f64> {
        features.dot(&self.weights.t()) + &self.bias
    }

    /// Image-feature space embedding of the logits: `P z`, plus `z` itself
    /// when the dimensions agree (residual pass-through).
    pub fn project(&self, logits: ArrayView2<'_, f64>) -> Option<Array2<f64>> {
        let p = self.projection.as_ref()?;
        let mut out = logits.dot(&p.t());
        if p.nrows() == p.ncols() {
            out += &logits;
        }
        Some(out)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Class probabilities of every point.
pub fn forward(model: &ModelParams, features: ArrayView2<'_, f64>) -> Array2<f64> {
    softmax(model.logits(features).view())
}

/// Highest-probability class per row, ties to the lowest id.
pub fn argmax_rows(probs: ArrayView2<'_, f64>) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Per-column standardization used during training.
///
/// Training runs on `(x - mean) / std`; [`FeatureNorm::fold`] rewrites a
/// model trained that way so it takes raw features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNorm {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl FeatureNorm {
    /// Column statistics over the stacked rows of every matrix. Constant
    /// columns get a std of 1.
    pub fn fit<'a>(features: impl IntoIterator<Item = &'a Array2<f64>>) -> Option<Self> {
        let mut sum: Option<Array1<f64>> = None;
        let mut sq: Option<Array1<f64>> = None;
        let mut n = 0usize;
        for f in features {
            let s = f.sum_axis(Axis(0));
            let q = f.mapv(|v| v * v).sum_axis(Axis(0));
            match (&mut sum, &mut sq) {
                (Some(a), Some(b)) => {
                    *a += &s;
                    *b += &q;
                }
                _ => {
                    sum = Some(s);
                    sq = Some(q);
                }
            }
            n += f.nrows();
        }
        let (sum, sq) = (sum?, sq?);
        if n == 0 {
            return None;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean.mapv(|m| m * m);
        let std = var.mapv(|v| if v > 1e-12 { v.sqrt() } else { 1.0 });
        Some(Self { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            std: Array1::ones(dim),
        }
    }

    pub fn apply(&self, features: &mut Array2<f64>) {
        for mut row in features.rows_mut() {
            row -= &self.mean;
            row /= &self.std;
        }
    }

    /// `W' = W / std`, `b' = b - W' mean`: same logits on raw features.
    pub fn fold(&self, model: &ModelParams) -> ModelParams {
        let mut out = model.clone();
        for mut row in out.weights.rows_mut() {
            row /= &self.std;
        }
        out.bias = &model.bias - &out.weights.dot(&self.mean);
        out
    }
}

/// Parameter gradients, same shapes as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub projection: Option<Array2<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &ModelParams) -> Self {
        Self {
            weights: Array2::zeros(model.weights.raw_dim()),
            bias: Array1::zeros(model.bias.raw_dim()),
            projection: model.projection.as_ref().map(|p| Array2::zeros(p.raw_dim())),
        }
    }

    /// Chain rule through `z = W x + b`: accumulates `scale * dL/dz` into the
    /// weight and bias gradients.
    pub fn add_logit_grad(&mut self, features: ArrayView2<'_, f64>, grad_logits: ArrayView2<'_, f64>, scale: f64) {
        self.weights.scaled_add(scale, &grad_logits.t().dot(&features));
        self.bias.scaled_add(scale, &grad_logits.sum_axis(Axis(0)));
    }

    pub fn add_projection_grad(&mut self, grad: &Array2<f64>, scale: f64) {
        if let Some(p) = self.projection.as_mut() {
            p.scaled_add(scale, grad);
        }
    }
}

impl Gradients {
    /// Euclidean norm over every parameter gradient.
    pub fn norm(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.bias)
            .chain(self.projection.iter().flatten())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the norm is at most `max_norm`. Returns the factor used.
    pub fn clip(&mut self, max_norm: f64) -> f64 {
        let n = self.norm();
        if n <= max_norm || n == 0.0 {
            return 1.0;
        }
        let f = max_norm / n;
        self.weights *= f;
        self.bias *= f;
        if let Some(p) = self.projection.as_mut() {
            *p *= f;
        }
        f
    }
}

/// `w <- w - lr * g`.
pub fn sgd_step(model: &ModelParams, grads: &Gradients, lr: f64) -> ModelParams {
    let mut next = model.clone();
    next.weights.scaled_add(-lr, &grads.weights);
    next.bias.scaled_add(-lr, &grads.bias);
    if let (Some(p), Some(g)) = (next.projection.as_mut(), grads.projection.as_ref()) {
        p.scaled_add(-lr, g);
    }
    next
}

/// `teacher <- alpha * teacher + (1 - alpha) * student`, elementwise.
pub fn ema_update(teacher: &ModelParams, student: &ModelParams, alpha: f64) -> Result<ModelParams> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("EMA momentum {alpha} outside [0, 1)")));
    }
    if teacher.weights.raw_dim() != student.weights.raw_dim() {
        return Err(Error::InvalidArgument("teacher and student shapes differ".into()));
    }
    let blend = |t: f64, s: f64| alpha * t + (1.0 - alpha) * s;
    let mut next = teacher.clone();
    next.weights.zip_mut_with(&student.weights, |t, &s| *t = blend(*t, s));
    next.bias.zip_mut_with(&student.bias, |t, &s| *t = blend(*t, s));
    match (next.projection.as_mut(), student.projection.as_ref()) {
        (Some(t), Some(s)) if t.raw_dim() == s.raw_dim() => t.zip_mut_with(s, |t, &s| *t = blend(*t, s)),
        (None, Some(s)) => next.projection = Some(s.clone()),
        _ => {}
    }
    Ok(next)
}
