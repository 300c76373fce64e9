//! Spherical angles, inclination/azimuth area partitions and range-view rasterization.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::cloud::{PointCloud, IGNORE_LABEL};
use crate::error::{Error, Result};

fn check_finite(p: [f64; 3]) -> Result<()> {
    if p.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("non-finite point {p:?}")))
    }
}

/// Elevation of `p` above the sensor's horizontal plane, in radians.
pub fn inclination(p: [f64; 3]) -> Result<f64> {
    check_finite(p)?;
    Ok(inclination_unchecked(p))
}

pub(crate) fn inclination_unchecked([x, y, z]: [f64; 3]) -> f64 {
    let planar = x.hypot(y);
    if planar == 0.0 {
        if z > 0.0 {
            FRAC_PI_2
        } else if z < 0.0 {
            -FRAC_PI_2
        } else {
            0.0
        }
    } else {
        (z / planar).atan()
    }
}

/// Horizontal angle of `p` around the z axis, in `[-π, π)`.
pub fn azimuth(p: [f64; 3]) -> Result<f64> {
    check_finite(p)?;
    Ok(azimuth_unchecked(p))
}

pub(crate) fn azimuth_unchecked([x, y, _]: [f64; 3]) -> f64 {
    if x == 0.0 && y == 0.0 {
        return 0.0;
    }
    let a = y.atan2(x);
    if a >= PI {
        -PI
    } else {
        a
    }
}

/// Inclination bands `[φ_k, φ_{k+1})`; the last band is closed on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPartition {
    bounds: Vec<f64>,
}

impl BeamPartition {
    pub fn new(bounds: Vec<f64>) -> Result<Self> {
        if bounds.len() < 2 {
            return Err(Error::InvalidArgument(
                "a partition needs at least two bounds".into(),
            ));
        }
        if bounds
            .iter()
            .any(|b| !b.is_finite() || *b <= -FRAC_PI_2 || *b >= FRAC_PI_2)
        {
            return Err(Error::InvalidArgument(
                "partition bounds must lie in (-pi/2, pi/2)".into(),
            ));
        }
        if bounds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "partition bounds must be strictly increasing".into(),
            ));
        }
        Ok(Self { bounds })
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    /// Number of areas `m`.
    pub fn areas(&self) -> usize {
        self.bounds.len() - 1
    }

    /// Area index of an inclination. Values outside the bounds clamp to the
    /// first or last area.
    pub fn area_of(&self, phi: f64) -> usize {
        let above = self.bounds.partition_point(|&b| b <= phi);
        above.saturating_sub(1).min(self.areas() - 1)
    }
}

/// `m` equal-angle bands between `phi_min` and `phi_max`.
pub fn make_inclination_partition(phi_min: f64, phi_max: f64, m: usize) -> Result<BeamPartition> {
    if m < 1 {
        return Err(Error::InvalidArgument("need at least one area".into()));
    }
    if !(phi_min < phi_max) {
        return Err(Error::InvalidArgument(format!(
            "phi_min {phi_min} must be below phi_max {phi_max}"
        )));
    }
    let step = (phi_max - phi_min) / m as f64;
    let mut bounds: Vec<f64> = (0..=m).map(|k| phi_min + k as f64 * step).collect();
    bounds[m] = phi_max;
    BeamPartition::new(bounds)
}

/// Area index of every point.
pub fn assign_areas(cloud: &PointCloud, partition: &BeamPartition) -> Vec<usize> {
    cloud
        .coords()
        .iter()
        .map(|&p| partition.area_of(inclination_unchecked(p)))
        .collect()
}

/// `azimuth_count` equal sectors starting at -π crossed with inclination bands.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPartition {
    inclination: BeamPartition,
    azimuth_count: usize,
}

impl GridPartition {
    pub fn new(inclination: BeamPartition, azimuth_count: usize) -> Result<Self> {
        if azimuth_count < 1 {
            return Err(Error::InvalidArgument(
                "need at least one azimuth sector".into(),
            ));
        }
        Ok(Self {
            inclination,
            azimuth_count,
        })
    }

    pub fn inclination(&self) -> &BeamPartition {
        &self.inclination
    }

    pub fn azimuth_count(&self) -> usize {
        self.azimuth_count
    }

    /// Total cell count `i * j`.
    pub fn cells(&self) -> usize {
        self.azimuth_count * self.inclination.areas()
    }

    pub fn sector_of(&self, alpha: f64) -> usize {
        let width = TAU / self.azimuth_count as f64;
        let s = ((alpha + PI) / width).floor();
        if s < 0.0 {
            0
        } else {
            (s as usize).min(self.azimuth_count - 1)
        }
    }

    /// `(sector, inclination area)` of a point.
    pub fn cell_of(&self, p: [f64; 3]) -> (usize, usize) {
        (
            self.sector_of(azimuth_unchecked(p)),
            self.inclination.area_of(inclination_unchecked(p)),
        )
    }
}

/// Flattened grid index `sector * j + inclination_area` of every point.
pub fn assign_grid_areas(cloud: &PointCloud, grid: &GridPartition) -> Vec<usize> {
    let j = grid.inclination.areas();
    cloud
        .coords()
        .iter()
        .map(|&p| {
            let (sector, area) = grid.cell_of(p);
            sector * j + area
        })
        .collect()
}

/// Azimuth column of an angle in a `width`-column raster starting at -π.
pub fn azimuth_column(alpha: f64, width: usize) -> usize {
    let c = ((alpha + PI) / TAU * width as f64).floor();
    if c < 0.0 {
        0
    } else {
        (c as usize).min(width - 1)
    }
}

/// Range-view raster: row = beam area (row 0 lowest), column = azimuth bin.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    height: usize,
    width: usize,
    depth: Vec<f64>,
    class: Vec<u16>,
    index: Vec<i64>,
}

impl RangeImage {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            depth: vec![0.0; height * width],
            class: vec![IGNORE_LABEL; height * width],
            index: vec![-1; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn cell(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    /// Source point index of a cell, `-1` when empty.
    pub fn index(&self, row: usize, col: usize) -> i64 {
        self.index[self.cell(row, col)]
    }

    pub fn depth(&self, row: usize, col: usize) -> f64 {
        self.depth[self.cell(row, col)]
    }

    pub fn class(&self, row: usize, col: usize) -> u16 {
        self.class[self.cell(row, col)]
    }

    pub fn occupied(&self) -> usize {
        self.index.iter().filter(|&&i| i >= 0).count()
    }
}

/// Nearest-return range image of a cloud.
pub fn range_view_rasterize(
    cloud: &PointCloud,
    partition: &BeamPartition,
    width: usize,
) -> Result<RangeImage> {
    if width < 1 {
        return Err(Error::InvalidArgument("range image width must be >= 1".into()));
    }
    let mut img = RangeImage::empty(partition.areas(), width);
    for (i, &p) in cloud.coords().iter().enumerate() {
        let row = partition.area_of(inclination_unchecked(p));
        let col = azimuth_column(azimuth_unchecked(p), width);
        let cell = img.cell(row, col);
        let r = cloud.range(i);
        if img.index[cell] < 0 || r < img.depth[cell] {
            img.index[cell] = i as i64;
            img.depth[cell] = r;
            img.class[cell] = cloud.labels().map_or(IGNORE_LABEL, |l| l[i]);
        }
    }
    Ok(img)
}
