//! Rotating-beam LiDAR simulator over analytic primitives.
//!
//! The world has its ground plane at `z = 0` and the sensor at
//! `(0, 0, sensor_height)`. Returned points are expressed in the sensor frame
//! (origin at the sensor, axes parallel to the world), so ground returns sit
//! at `z = -sensor_height`, matching the on-disk layout of real datasets.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::camera::{paint_points_multi, project_points, CalibrationParams, Correspondence, ImagePlane};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};

const HIT_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    GroundPlane,
    /// Axis-aligned box; `extents` are full side lengths.
    Box { center: [f64; 3], extents: [f64; 3] },
    /// Vertical cylinder centered at `center`, spanning `height` along z.
    Cylinder { center: [f64; 3], radius: f64, height: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub class_id: u16,
    pub shape: Shape,
    /// Mean return intensity of the primitive's surface.
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub sensor_height: f64,
    /// Beam elevations in radians, ascending.
    pub beam_inclinations: Vec<f64>,
    pub azimuth_steps: usize,
    pub primitives: Vec<Primitive>,
    pub max_range: f64,
    pub seed: u64,
    /// Per-axis Gaussian noise std in meters, applied after labeling.
    pub jitter: f64,
    pub intensity_noise: f64,
    pub class_names: Vec<String>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.azimuth_steps < 4 {
            return Err(Error::InvalidArgument("azimuth_steps must be >= 4".into()));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::InvalidArgument("max_range must be positive".into()));
        }
        if self.beam_inclinations.is_empty() {
            return Err(Error::InvalidArgument("at least one beam is required".into()));
        }
        if self.beam_inclinations.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "beam inclinations must be strictly ascending".into(),
            ));
        }
        if self.jitter < 0.0 || self.intensity_noise < 0.0 {
            return Err(Error::InvalidArgument("noise levels must be non-negative".into()));
        }
        Ok(())
    }

    pub fn sensor_origin(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.sensor_height)
    }

    /// Largest class id used by any primitive, plus one.
    pub fn num_classes(&self) -> usize {
        let from_prims = self
            .primitives
            .iter()
            .map(|p| usize::from(p.class_id) + 1)
            .max()
            .unwrap_or(0);
        from_prims.max(self.class_names.len())
    }

    /// Nearest hit along a ray: `(distance, primitive index)`.
    pub fn cast(&self, origin: Vector3<f64>, dir: Vector3<f64>) -> Option<(f64, usize)> {
        self.primitives
            .iter()
            .enumerate()
            .filter_map(|(i, p)| intersect(&p.shape, origin, dir).map(|t| (t, i)))
            .filter(|&(t, _)| t <= self.max_range)
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }
}

/// Unit direction of a beam at elevation `phi` and azimuth `theta`.
pub fn beam_direction(phi: f64, theta: f64) -> Vector3<f64> {
    Vector3::new(phi.cos() * theta.cos(), phi.cos() * theta.sin(), phi.sin())
}

/// Azimuth of step `k` out of `steps`, starting at -π.
pub fn step_azimuth(k: usize, steps: usize) -> f64 {
    -PI + 2.0 * PI * k as f64 / steps as f64
}

/// Distance along a unit ray to the first intersection with `shape`.
pub fn intersect(shape: &Shape, o: Vector3<f64>, d: Vector3<f64>) -> Option<f64> {
    match shape {
        Shape::GroundPlane => {
            if d.z < 0.0 && o.z > 0.0 {
                Some(-o.z / d.z)
            } else {
                None
            }
        }
        Shape::Box { center, extents } => {
            let mut t_near = f64::NEG_INFINITY;
            let mut t_far = f64::INFINITY;
            for k in 0..3 {
                let lo = center[k] - extents[k] / 2.0;
                let hi = center[k] + extents[k] / 2.0;
                if d[k] == 0.0 {
                    if o[k] < lo || o[k] > hi {
                        return None;
                    }
                    continue;
                }
                let (t0, t1) = ((lo - o[k]) / d[k], (hi - o[k]) / d[k]);
                t_near = t_near.max(t0.min(t1));
                t_far = t_far.min(t0.max(t1));
            }
            if t_near > t_far || t_far <= HIT_EPSILON {
                None
            } else if t_near > HIT_EPSILON {
                Some(t_near)
            } else {
                Some(t_far)
            }
        }
        Shape::Cylinder {
            center,
            radius,
            height,
        } => {
            let z_lo = center[2] - height / 2.0;
            let z_hi = center[2] + height / 2.0;
            let mut best: Option<f64> = None;
            let mut consider = |t: f64| {
                if t > HIT_EPSILON && best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            };
            let (ox, oy) = (o.x - center[0], o.y - center[1]);
            let a = d.x * d.x + d.y * d.y;
            if a > 0.0 {
                let b = 2.0 * (ox * d.x + oy * d.y);
                let c = ox * ox + oy * oy - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                        let z = o.z + t * d.z;
                        if (z_lo..=z_hi).contains(&z) {
                            consider(t);
                        }
                    }
                }
            }
            if d.z != 0.0 {
                for zc in [z_lo, z_hi] {
                    let t = (zc - o.z) / d.z;
                    let (x, y) = (ox + t * d.x, oy + t * d.y);
                    if x * x + y * y <= radius * radius {
                        consider(t);
                    }
                }
            }
            best
        }
    }
}

/// Casts every (beam, azimuth step) ray and returns the labeled hits.
pub fn simulate_scan(spec: &SceneSpec) -> Result<PointCloud> {
    spec.validate()?;
    let origin = spec.sensor_origin();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let jitter = Normal::new(0.0, spec.jitter).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let inoise =
        Normal::new(0.0, spec.intensity_noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let mut coords = Vec::new();
    let mut intensity = Vec::new();
    let mut labels = Vec::new();
    for &phi in &spec.beam_inclinations {
        for k in 0..spec.azimuth_steps {
            let dir = beam_direction(phi, step_azimuth(k, spec.azimuth_steps));
            let Some((t, prim)) = spec.cast(origin, dir) else {
                continue;
            };
            let p = dir * t;
            let prim = &spec.primitives[prim];
            let mut xyz = [p.x, p.y, p.z];
            if spec.jitter > 0.0 {
                for c in &mut xyz {
                    *c += jitter.sample(&mut rng);
                }
            }
            let mut value = prim.intensity;
            if spec.intensity_noise > 0.0 {
                value += inoise.sample(&mut rng);
            }
            coords.push(xyz);
            intensity.push(value.clamp(0.0, 1.0));
            labels.push(prim.class_id);
        }
    }
    PointCloud::new(coords, intensity)?.with_labels(labels)
}

/// Copy of `template` with every non-ground primitive moved, resized or
/// dropped at random.
pub fn perturb_scene(template: &SceneSpec, seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = template.clone();
    scene.seed = seed;
    scene.primitives.clear();
    for prim in &template.primitives {
        // Draw every value up front so the stream does not depend on the shape.
        let keep = rng.random::<f64>() < 0.85;
        let angle: f64 = rng.random_range(-PI..PI);
        let radial: f64 = rng.random_range(0.75..1.25);
        let size: f64 = rng.random_range(0.8..1.2);
        let (sin, cos) = angle.sin_cos();
        let place = |c: [f64; 3]| [radial * (cos * c[0] - sin * c[1]), radial * (sin * c[0] + cos * c[1]), c[2]];
        let shape = match &prim.shape {
            Shape::GroundPlane => Shape::GroundPlane,
            _ if !keep => continue,
            Shape::Box { center, extents } => {
                let ext = [extents[0] * size, extents[1] * size, extents[2] * size];
                let mut c = place(*center);
                c[2] = ext[2] / 2.0 + (center[2] - extents[2] / 2.0);
                // keep the box axis-aligned; swap footprint for a quarter turn
                let ext = if (angle.abs() - PI / 2.0).abs() < PI / 4.0 {
                    [ext[1], ext[0], ext[2]]
                } else {
                    ext
                };
                Shape::Box { center: c, extents: ext }
            }
            Shape::Cylinder { center, radius, height } => {
                let h = height * size;
                let mut c = place(*center);
                c[2] = h / 2.0 + (center[2] - height / 2.0);
                Shape::Cylinder { center: c, radius: radius * size, height: h }
            }
        };
        scene.primitives.push(Primitive { shape, ..prim.clone() });
    }
    scene
}

/// `num_scenes` perturbed copies of `template`, scene `i` seeded with `seed + i`.
pub fn make_benchmark(template: &SceneSpec, num_scenes: usize, seed: u64) -> Result<Vec<PointCloud>> {
    (0..num_scenes)
        .map(|i| simulate_scan(&perturb_scene(template, seed.wrapping_add(i as u64))))
        .collect()
}

/// Class id seen by every pixel of a camera placed according to `calib`
/// (pixel centers at integer coordinates). `None` means no hit.
pub fn render_class_image(spec: &SceneSpec, calib: &CalibrationParams) -> Vec<Option<u16>> {
    let (w, h) = calib.image_size();
    let k_inv = calib
        .intrinsic()
        .try_inverse()
        .unwrap_or_else(Matrix3::identity);
    let ext = calib.extrinsic();
    let rot = ext.fixed_view::<3, 3>(0, 0).into_owned();
    let trans = ext.fixed_view::<3, 1>(0, 3).into_owned();
    let cam_center = -(rot.transpose() * trans) + spec.sensor_origin();
    let mut out = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let ray_cam = k_inv * Vector3::new(u as f64, v as f64, 1.0);
            let dir = (rot.transpose() * ray_cam).normalize();
            out.push(spec.cast(cam_center, dir).map(|(_, i)| spec.primitives[i].class_id));
        }
    }
    out
}

/// Feature image standing in for a pretrained 2D network: each pixel holds
/// its class prototype plus Gaussian noise; pixels without a hit are zero.
pub fn feature_image(
    classes: &[Option<u16>],
    width: usize,
    height: usize,
    prototypes: &[Vec<f32>],
    noise: f64,
    seed: u64,
) -> Result<ImagePlane> {
    let dim = prototypes.first().map_or(0, Vec::len);
    if dim == 0 || prototypes.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidArgument("prototype rows must share a non-zero width".into()));
    }
    if classes.len() != width * height {
        return Err(Error::InvalidArgument("class image size mismatch".into()));
    }
    let normal = Normal::new(0.0, noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(classes.len() * dim);
    for c in classes {
        match c.and_then(|c| prototypes.get(usize::from(c))) {
            Some(proto) => data.extend(proto.iter().map(|&v| v + normal.sample(&mut rng) as f32)),
            None => data.extend(std::iter::repeat_n(0.0f32, dim)),
        }
    }
    ImagePlane::new(width, height, dim, data)
}

/// Front-facing pinhole camera at the sensor origin.
pub fn front_camera(width: usize, height: usize, horizontal_fov: f64) -> Result<CalibrationParams> {
    yawed_camera(width, height, horizontal_fov, 0.0)
}

/// Pinhole camera at the sensor origin looking along azimuth `yaw`.
pub fn yawed_camera(width: usize, height: usize, horizontal_fov: f64, yaw: f64) -> Result<CalibrationParams> {
    if width == 0 || height == 0 || !(horizontal_fov > 0.0 && horizontal_fov < PI) {
        return Err(Error::InvalidArgument("camera needs a non-empty image and a field of view in (0, pi)".into()));
    }
    let f = (width as f64 / 2.0) / (horizontal_fov / 2.0).tan();
    let k = Matrix3::new(
        f, 0.0, width as f64 / 2.0,
        0.0, f, height as f64 / 2.0,
        0.0, 0.0, 1.0,
    );
    let (sin, cos) = yaw.sin_cos();
    #[rustfmt::skip]
    let ext = nalgebra::Matrix4::new(
        sin, -cos, 0.0, 0.0,
        0.0, 0.0, -1.0, 0.0,
        cos, sin, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    );
    CalibrationParams::new(k, ext, (width, height))
}

/// Four 90-degree cameras covering the full turn.
pub fn surround_cameras(width: usize, height: usize) -> Result<Vec<CalibrationParams>> {
    (0..4).map(|k| yawed_camera(width, height, PI / 2.0, k as f64 * PI / 2.0)).collect()
}

/// `C x C` identity prototypes: class `c` lights up channel `c`.
pub fn one_hot_prototypes(num_classes: usize) -> Vec<Vec<f32>> {
    (0..num_classes)
        .map(|c| (0..num_classes).map(|k| if k == c { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Paints a simulated scan with stand-in image features rendered from the
/// same scene by every camera.
pub fn paint_scan(
    spec: &SceneSpec,
    cloud: &PointCloud,
    cameras: &[CalibrationParams],
    prototypes: &[Vec<f32>],
    noise: f64,
) -> Result<PointCloud> {
    let mut images = Vec::with_capacity(cameras.len());
    let mut corrs = Vec::with_capacity(cameras.len());
    for (k, cam) in cameras.iter().enumerate() {
        let (w, h) = cam.image_size();
        let classes = render_class_image(spec, cam);
        let seed = spec.seed.wrapping_mul(31).wrapping_add(k as u64);
        images.push(feature_image(&classes, w, h, prototypes, noise, seed)?);
        corrs.push(project_points(cloud, cam));
    }
    let views: Vec<(&ImagePlane, &Correspondence)> = images.iter().zip(&corrs).collect();
    paint_points_multi(cloud, &views)
}

/// Like [`make_benchmark`] with every scan painted by [`paint_scan`].
pub fn make_painted_benchmark(
    template: &SceneSpec,
    num_scenes: usize,
    seed: u64,
    cameras: &[CalibrationParams],
    prototypes: &[Vec<f32>],
    noise: f64,
) -> Result<Vec<PointCloud>> {
    (0..num_scenes)
        .map(|i| {
            let scene = perturb_scene(template, seed.wrapping_add(i as u64));
            paint_scan(&scene, &simulate_scan(&scene)?, cameras, prototypes, noise)
        })
        .collect()
}

/// Scene template of a small street corner: ground, buildings, cars, poles
/// and vegetation seen by an 8-beam sensor.
pub const DEFAULT_TEMPLATE: &str = "\
# street corner seen by an 8-beam sensor
sensor_height = 1.8
beams = 8
fov_down_deg = -22
fov_up_deg = 2
azimuth_steps = 240
max_range = 40
seed = 0
jitter = 0.02
intensity_noise = 0.08
class_names = ground building car pole vegetation

[ground]
class = 0
intensity = 0.25

[box]
class = 1
center = 18 10 5
extents = 10 12 10
intensity = 0.45

[box]
class = 1
center = -16 -14 6
extents = 12 10 12
intensity = 0.45

[box]
class = 1
center = 4 -20 4
extents = 14 8 8
intensity = 0.45

[box]
class = 2
center = 7 -3.5 0.75
extents = 4.4 1.9 1.5
intensity = 0.6

[box]
class = 2
center = -6 3.5 0.75
extents = 4.4 1.9 1.5
intensity = 0.6

[box]
class = 2
center = 12 4 0.8
extents = 1.9 4.6 1.6
intensity = 0.6

[cylinder]
class = 3
center = 5 5 3
radius = 0.2
height = 6
intensity = 0.7

[cylinder]
class = 3
center = -8 -5 3
radius = 0.2
height = 6
intensity = 0.7

[cylinder]
class = 4
center = -10 12 2.5
radius = 2.2
height = 5
intensity = 0.35

[cylinder]
class = 4
center = 14 -10 2
radius = 1.8
height = 4
intensity = 0.35
";

impl SceneSpec {
    pub fn default_template() -> SceneSpec {
        SceneSpec::parse(DEFAULT_TEMPLATE).expect("built-in template parses")
    }

    /// Parses a `key = value` template with `[ground]`, `[box]` and
    /// `[cylinder]` sections. `#` starts a comment.
    pub fn parse(text: &str) -> Result<SceneSpec> {
        let mut header = Vec::new();
        let mut sections: Vec<(String, u64, Vec<(String, String, u64)>)> = Vec::new();
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            let at = offset;
            offset += line.len() as u64;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                sections.push((name.trim().to_string(), at, Vec::new()));
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(Error::format(at, format!("expected key = value, got `{content}`")));
            };
            let entry = (k.trim().to_string(), v.trim().to_string(), at);
            match sections.last_mut() {
                Some((_, _, entries)) => entries.push(entry),
                None => header.push(entry),
            }
        }

        let mut spec = SceneSpec {
            sensor_height: 1.8,
            beam_inclinations: Vec::new(),
            azimuth_steps: 360,
            primitives: Vec::new(),
            max_range: 50.0,
            seed: 0,
            jitter: 0.0,
            intensity_noise: 0.0,
            class_names: Vec::new(),
        };
        let (mut beams, mut fov_down, mut fov_up) = (None, None, None);
        for (k, v, at) in &header {
            let at = *at;
            match k.as_str() {
                "sensor_height" => spec.sensor_height = parse_num(v, at)?,
                "azimuth_steps" => spec.azimuth_steps = parse_num(v, at)?,
                "max_range" => spec.max_range = parse_num(v, at)?,
                "seed" => spec.seed = parse_num(v, at)?,
                "jitter" => spec.jitter = parse_num(v, at)?,
                "intensity_noise" => spec.intensity_noise = parse_num(v, at)?,
                "beams" => beams = Some(parse_num::<usize>(v, at)?),
                "fov_down_deg" => fov_down = Some(parse_num::<f64>(v, at)?),
                "fov_up_deg" => fov_up = Some(parse_num::<f64>(v, at)?),
                "inclinations_deg" => {
                    spec.beam_inclinations = parse_list::<f64>(v, at)?
                        .into_iter()
                        .map(f64::to_radians)
                        .collect()
                }
                "class_names" => {
                    spec.class_names = v.split_whitespace().map(str::to_string).collect()
                }
                other => return Err(Error::format(at, format!("unknown key `{other}`"))),
            }
        }
        if spec.beam_inclinations.is_empty() {
            let (Some(n), Some(lo), Some(hi)) = (beams, fov_down, fov_up) else {
                return Err(Error::format(
                    0,
                    "template needs inclinations_deg or beams + fov_down_deg + fov_up_deg",
                ));
            };
            spec.beam_inclinations = match n {
                0 => Vec::new(),
                1 => vec![lo.to_radians()],
                _ => (0..n)
                    .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).to_radians())
                    .collect(),
            };
        }

        for (name, at, entries) in &sections {
            let get = |key: &str| entries.iter().find(|(k, _, _)| k == key).map(|(_, v, a)| (v.as_str(), *a));
            let need = |key: &str| get(key).ok_or_else(|| Error::format(*at, format!("[{name}] needs `{key}`")));
            for (k, _, a) in entries {
                if !["class", "intensity", "center", "extents", "radius", "height"].contains(&k.as_str()) {
                    return Err(Error::format(*a, format!("unknown key `{k}` in [{name}]")));
                }
            }
            let (cv, ca) = need("class")?;
            let class_id: u16 = parse_num(cv, ca)?;
            let intensity = match get("intensity") {
                Some((v, a)) => parse_num(v, a)?,
                None => 0.5,
            };
            let vec3 = |key: &str| -> Result<[f64; 3]> {
                let (v, a) = need(key)?;
                let xs = parse_list::<f64>(v, a)?;
                <[f64; 3]>::try_from(xs).map_err(|_| Error::format(a, format!("`{key}` needs 3 values")))
            };
            let shape = match name.as_str() {
                "ground" => Shape::GroundPlane,
                "box" => Shape::Box { center: vec3("center")?, extents: vec3("extents")? },
                "cylinder" => {
                    let (r, ra) = need("radius")?;
                    let (h, ha) = need("height")?;
                    Shape::Cylinder { center: vec3("center")?, radius: parse_num(r, ra)?, height: parse_num(h, ha)? }
                }
                other => return Err(Error::format(*at, format!("unknown section [{other}]"))),
            };
            spec.primitives.push(Primitive { class_id, shape, intensity });
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_num<T: std::str::FromStr>(v: &str, at: u64) -> Result<T> {
    v.parse()
        .map_err(|_| Error::format(at, format!("cannot parse `{v}`")))
}

fn parse_list<T: std::str::FromStr>(v: &str, at: u64) -> Result<Vec<T>> {
    v.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(s, at))
        .collect()
}
