//! LaserMix and the baseline scene-mixing strategies.
//!
//! Every mix routes whole points: coordinates, intensity, label, instance id
//! and painted channels always travel together. Outputs list the points taken
//! from scan A first (in their original order), then those from scan B.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{
    assign_areas, inclination_unchecked, BeamPartition, GridPartition,
};

/// Which input scan an output point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    ScanA,
    ScanB,
}

/// Origin of one output point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Provenance {
    pub source: Source,
    pub index: usize,
}

/// Axis-aligned box used by [`cutmix_area`]. Bounds are inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|k| self.min[k] <= p[k] && p[k] <= self.max[k])
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|k| (self.max[k] - self.min[k]).max(0.0)).product()
    }

    /// Bounding box of one or more clouds; `None` when all are empty.
    pub fn bounding(clouds: &[&PointCloud]) -> Option<Aabb> {
        let mut pts = clouds.iter().flat_map(|c| c.coords().iter());
        let first = *pts.next()?;
        let mut bb = Aabb::new(first, first);
        for p in pts {
            for k in 0..3 {
                bb.min[k] = bb.min[k].min(p[k]);
                bb.max[k] = bb.max[k].max(p[k]);
            }
        }
        Some(bb)
    }
}

/// The partition or parameters a [`MixOutput`] was produced with.
#[derive(Debug, Clone, PartialEq)]
pub enum MixDescriptor {
    /// Scan A keeps the even (0-based) inclination areas.
    Beam(BeamPartition),
    /// Scan A keeps cells with even `sector + inclination_area`.
    Grid(GridPartition),
    PointMixup { ratio: f64, seed: u64 },
    Box(Aabb),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixOutput {
    pub mixed_a: PointCloud,
    pub mixed_b: PointCloud,
    pub provenance_a: Vec<Provenance>,
    pub provenance_b: Vec<Provenance>,
    pub descriptor: MixDescriptor,
}

/// Builds both outputs from a per-point routing decision: `true` sends the
/// point to `mixed_a`.
fn route(
    scan_a: &PointCloud,
    scan_b: &PointCloud,
    a_to_first: impl Fn(usize) -> bool,
    b_to_first: impl Fn(usize) -> bool,
    descriptor: MixDescriptor,
) -> Result<MixOutput> {
    if !scan_a.is_empty() && !scan_b.is_empty() && !scan_a.same_schema(scan_b) {
        return Err(Error::InvalidArgument(
            "scans carry different label/painted layouts".into(),
        ));
    }
    let (a_keep, a_give): (Vec<usize>, Vec<usize>) = (0..scan_a.len()).partition(|&i| a_to_first(i));
    let (b_give, b_keep): (Vec<usize>, Vec<usize>) = (0..scan_b.len()).partition(|&i| b_to_first(i));

    let prov = |source, idx: &[usize]| -> Vec<Provenance> {
        idx.iter().map(|&index| Provenance { source, index }).collect()
    };
    let mixed_a = scan_a.select(&a_keep).concat(&scan_b.select(&b_give))?;
    let mixed_b = scan_a.select(&a_give).concat(&scan_b.select(&b_keep))?;
    let mut provenance_a = prov(Source::ScanA, &a_keep);
    provenance_a.extend(prov(Source::ScanB, &b_give));
    let mut provenance_b = prov(Source::ScanA, &a_give);
    provenance_b.extend(prov(Source::ScanB, &b_keep));
    Ok(MixOutput {
        mixed_a,
        mixed_b,
        provenance_a,
        provenance_b,
        descriptor,
    })
}

/// Intertwines the inclination areas of two scans.
///
/// `mixed_a` takes scan A's points in areas 0, 2, 4, ... and scan B's points
/// in areas 1, 3, 5, ...; `mixed_b` takes the rest.
pub fn laser_mix(scan_a: &PointCloud, scan_b: &PointCloud, partition: &BeamPartition) -> Result<MixOutput> {
    let areas_a = assign_areas(scan_a, partition);
    let areas_b = assign_areas(scan_b, partition);
    route(
        scan_a,
        scan_b,
        |i| areas_a[i].is_multiple_of(2),
        |i| areas_b[i] % 2 == 1,
        MixDescriptor::Beam(partition.clone()),
    )
}

/// LaserMix over painted scans. Painted channels (including the validity
/// flag appended by [`crate::camera::paint_points`]) travel with their points.
pub fn multi_modal_laser_mix(
    pair_a: &PointCloud,
    pair_b: &PointCloud,
    partition: &BeamPartition,
) -> Result<MixOutput> {
    if pair_a.painted_dim() != pair_b.painted_dim() {
        return Err(Error::InvalidArgument(format!(
            "painted dimensions differ: {} vs {}",
            pair_a.painted_dim(),
            pair_b.painted_dim()
        )));
    }
    laser_mix(pair_a, pair_b, partition)
}

/// Checkerboard mix over an azimuth x inclination grid.
pub fn grid_mix(scan_a: &PointCloud, scan_b: &PointCloud, grid: &GridPartition) -> Result<MixOutput> {
    let parity = |cloud: &PointCloud| -> Vec<usize> {
        cloud
            .coords()
            .iter()
            .map(|&p| {
                let (s, a) = grid.cell_of(p);
                (s + a) % 2
            })
            .collect()
    };
    let pa = parity(scan_a);
    let pb = parity(scan_b);
    route(
        scan_a,
        scan_b,
        |i| pa[i] == 0,
        |i| pb[i] == 1,
        MixDescriptor::Grid(grid.clone()),
    )
}

/// Random per-point partition. Every point of either scan lands in `mixed_a`
/// with probability `ratio` and in `mixed_b` otherwise.
pub fn point_mixup(scan_a: &PointCloud, scan_b: &PointCloud, ratio: f64, seed: u64) -> Result<MixOutput> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!("mixup ratio {ratio} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw_a: Vec<bool> = (0..scan_a.len()).map(|_| rng.random::<f64>() < ratio).collect();
    let draw_b: Vec<bool> = (0..scan_b.len()).map(|_| rng.random::<f64>() < ratio).collect();
    route(
        scan_a,
        scan_b,
        |i| draw_a[i],
        |i| draw_b[i],
        MixDescriptor::PointMixup { ratio, seed },
    )
}

/// Swaps the points of both scans that fall inside `region`.
/// A zero-volume box leaves both scans untouched.
pub fn cutmix_area(scan_a: &PointCloud, scan_b: &PointCloud, region: &Aabb) -> Result<MixOutput> {
    let degenerate = region.volume() <= 0.0;
    let inside = |p: [f64; 3]| !degenerate && region.contains(p);
    route(
        scan_a,
        scan_b,
        |i| !inside(scan_a.coords()[i]),
        |i| inside(scan_b.coords()[i]),
        MixDescriptor::Box(*region),
    )
}

/// Random box with its center uniform inside `scene` and each side uniform in
/// `[min_side, max_side]`.
pub fn random_box(scene: &Aabb, min_side: f64, max_side: f64, seed: u64) -> Result<Aabb> {
    if !(0.0 <= min_side && min_side <= max_side) {
        return Err(Error::InvalidArgument(format!(
            "box side range [{min_side}, {max_side}] is invalid"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min = [0.0; 3];
    let mut max = [0.0; 3];
    for k in 0..3 {
        let c = if scene.max[k] > scene.min[k] {
            rng.random_range(scene.min[k]..scene.max[k])
        } else {
            scene.min[k]
        };
        let side = if max_side > min_side {
            rng.random_range(min_side..max_side)
        } else {
            min_side
        };
        min[k] = c - side / 2.0;
        max[k] = c + side / 2.0;
    }
    Ok(Aabb::new(min, max))
}

/// Area parity removed by [`cutout_area`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// Drops every point whose inclination area has the given parity.
pub fn cutout_area(scan: &PointCloud, partition: &BeamPartition, drop: Parity) -> PointCloud {
    let dropped = match drop {
        Parity::Even => 0,
        Parity::Odd => 1,
    };
    let keep: Vec<usize> = scan
        .coords()
        .iter()
        .enumerate()
        .filter(|(_, &p)| partition.area_of(inclination_unchecked(p)) % 2 != dropped)
        .map(|(i, _)| i)
        .collect();
    scan.select(&keep)
}

/// Plain union of two scans.
pub fn scene_concat(scan_a: &PointCloud, scan_b: &PointCloud) -> Result<PointCloud> {
    scan_a.concat(scan_b)
}
