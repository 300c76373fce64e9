//! Labeled point-cloud container shared by every module.

use crate::error::{Error, Result};

/// Class id marking points that carry no supervision.
pub const IGNORE_LABEL: u16 = 255;

/// Per-point feature channels attached to a cloud (image evidence, validity flag, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Painted {
    dim: usize,
    values: Vec<f64>,
}

impl Painted {
    /// `values` is row-major, `dim` channels per point.
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 && !values.is_empty() {
            return Err(Error::InvalidInput(
                "zero-dimensional painting with non-empty values".into(),
            ));
        }
        if dim > 0 && !values.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} painted values is not a multiple of dim {dim}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite painted value at flat index {pos}"
            )));
        }
        Ok(Self { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.values.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// N points in the sensor frame (x forward, y left, z up, meters).
///
/// Intensity, labels, instance ids and painted channels, when present, have
/// exactly one entry per point. Every constructor validates this.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    coords: Vec<[f64; 3]>,
    intensity: Vec<f64>,
    labels: Option<Vec<u16>>,
    instances: Option<Vec<u16>>,
    painted: Option<Painted>,
}

impl PointCloud {
    pub fn new(coords: Vec<[f64; 3]>, intensity: Vec<f64>) -> Result<Self> {
        if coords.len() != intensity.len() {
            return Err(Error::InvalidInput(format!(
                "{} coordinates but {} intensities",
                coords.len(),
                intensity.len()
            )));
        }
        if let Some(i) = coords.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "non-finite coordinate at point {i}"
            )));
        }
        if let Some(i) = intensity.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite intensity at point {i}"
            )));
        }
        Ok(Self {
            coords,
            intensity,
            labels: None,
            instances: None,
            painted: None,
        })
    }

    /// Cloud with unit intensity, handy for geometric tests.
    pub fn from_coords(coords: Vec<[f64; 3]>) -> Result<Self> {
        let n = coords.len();
        Self::new(coords, vec![1.0; n])
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_labels(mut self, labels: Vec<u16>) -> Result<Self> {
        self.check_len("labels", labels.len())?;
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_instances(mut self, instances: Vec<u16>) -> Result<Self> {
        self.check_len("instances", instances.len())?;
        self.instances = Some(instances);
        Ok(self)
    }

    pub fn with_painted(mut self, painted: Painted) -> Result<Self> {
        if painted.dim() > 0 {
            self.check_len("painted rows", painted.len())?;
        } else if !self.is_empty() {
            return Err(Error::InvalidInput(
                "zero-dimensional painting on a non-empty cloud".into(),
            ));
        }
        self.painted = Some(painted);
        Ok(self)
    }

    pub fn without_painted(mut self) -> Self {
        self.painted = None;
        self
    }

    fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::InvalidInput(format!(
                "{len} {what} for {} points",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[[f64; 3]] {
        &self.coords
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn labels(&self) -> Option<&[u16]> {
        self.labels.as_deref()
    }

    pub fn instances(&self) -> Option<&[u16]> {
        self.instances.as_deref()
    }

    pub fn painted(&self) -> Option<&Painted> {
        self.painted.as_ref()
    }

    /// Number of painted channels, 0 when unpainted.
    pub fn painted_dim(&self) -> usize {
        self.painted.as_ref().map_or(0, Painted::dim)
    }

    pub fn range(&self, i: usize) -> f64 {
        let [x, y, z] = self.coords[i];
        (x * x + y * y + z * z).sqrt()
    }

    /// Checks that every label is a valid class id or [`IGNORE_LABEL`].
    pub fn validate_labels(&self, num_classes: usize) -> Result<()> {
        if let Some(labels) = &self.labels {
            if let Some(i) = labels
                .iter()
                .position(|&l| l != IGNORE_LABEL && usize::from(l) >= num_classes)
            {
                return Err(Error::InvalidInput(format!(
                    "label {} at point {i} is not below {num_classes} nor the ignore id",
                    labels[i]
                )));
            }
        }
        Ok(())
    }

    /// New cloud holding the listed points (in that order) with all their fields.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            coords: indices.iter().map(|&i| self.coords[i]).collect(),
            intensity: indices.iter().map(|&i| self.intensity[i]).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            instances: self
                .instances
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            painted: self.painted.as_ref().map(|p| Painted {
                dim: p.dim,
                values: indices.iter().flat_map(|&i| p.row(i)).copied().collect(),
            }),
        }
    }

    /// True when `other` carries the same optional fields with the same widths.
    pub fn same_schema(&self, other: &PointCloud) -> bool {
        self.labels.is_some() == other.labels.is_some()
            && self.instances.is_some() == other.instances.is_some()
            && self.painted.is_some() == other.painted.is_some()
            && self.painted_dim() == other.painted_dim()
    }

    /// Appends `other` after `self`. Both clouds must share a schema unless
    /// one of them is empty.
    pub fn concat(&self, other: &PointCloud) -> Result<PointCloud> {
        if other.is_empty() {
            return Ok(self.clone());
        }
        if self.is_empty() {
            return Ok(other.clone());
        }
        if !self.same_schema(other) {
            return Err(Error::InvalidArgument(
                "cannot join clouds with different label/painted layouts".into(),
            ));
        }
        fn join<T: Copy>(a: &Option<Vec<T>>, b: &Option<Vec<T>>) -> Option<Vec<T>> {
            match (a, b) {
                (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
                _ => None,
            }
        }
        Ok(PointCloud {
            coords: self.coords.iter().chain(&other.coords).copied().collect(),
            intensity: self.intensity.iter().chain(&other.intensity).copied().collect(),
            labels: join(&self.labels, &other.labels),
            instances: join(&self.instances, &other.instances),
            painted: match (&self.painted, &other.painted) {
                (Some(a), Some(b)) => Some(Painted {
                    dim: a.dim,
                    values: a.values.iter().chain(&b.values).copied().collect(),
                }),
                _ => None,
            },
        })
    }

    /// Replaces the labels in place; used to attach pseudo-labels.
    pub fn set_labels(&mut self, labels: Vec<u16>) -> Result<()> {
        self.check_len("labels", labels.len())?;
        self.labels = Some(labels);
        Ok(())
    }
}
