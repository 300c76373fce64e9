//! Camera calibration, point-to-pixel projection, painting and the masked
//! cosine distillation loss.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use ndarray::{Array2, ArrayView2};

use crate::cloud::{Painted, PointCloud};
use crate::error::{Error, Result};

/// Points closer than this to the camera plane are never projected.
pub const DEPTH_EPSILON: f64 = 1e-6;

/// Pinhole intrinsics plus a rigid LiDAR-to-camera transform.
///
/// The camera frame is z forward, x right, y down.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationParams {
    intrinsic: Matrix3<f64>,
    extrinsic: Matrix4<f64>,
    image_size: (usize, usize),
}

impl CalibrationParams {
    pub fn new(
        intrinsic: Matrix3<f64>,
        extrinsic: Matrix4<f64>,
        image_size: (usize, usize),
    ) -> Result<Self> {
        if intrinsic.iter().chain(extrinsic.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite calibration entry".into()));
        }
        if (intrinsic[(2, 2)] - 1.0).abs() > 1e-12
            || intrinsic[(2, 0)] != 0.0
            || intrinsic[(2, 1)] != 0.0
        {
            return Err(Error::InvalidInput(
                "intrinsic bottom row must be (0, 0, 1)".into(),
            ));
        }
        if intrinsic[(0, 0)] <= 0.0 || intrinsic[(1, 1)] <= 0.0 {
            return Err(Error::InvalidInput("focal lengths must be positive".into()));
        }
        let rot = extrinsic.fixed_view::<3, 3>(0, 0).into_owned();
        let gram = rot.transpose() * rot - Matrix3::identity();
        if gram.abs().max() > 1e-6 || (rot.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(
                "extrinsic rotation is not orthonormal with determinant +1".into(),
            ));
        }
        if extrinsic.fixed_view::<1, 4>(3, 0) != Matrix4::<f64>::identity().fixed_view::<1, 4>(3, 0)
        {
            return Err(Error::InvalidInput(
                "extrinsic bottom row must be (0, 0, 0, 1)".into(),
            ));
        }
        if image_size.0 == 0 || image_size.1 == 0 {
            return Err(Error::InvalidInput("image size must be non-zero".into()));
        }
        Ok(Self {
            intrinsic,
            extrinsic,
            image_size,
        })
    }

    pub fn intrinsic(&self) -> &Matrix3<f64> {
        &self.intrinsic
    }

    pub fn extrinsic(&self) -> &Matrix4<f64> {
        &self.extrinsic
    }

    /// `(width, height)` in pixels.
    pub fn image_size(&self) -> (usize, usize) {
        self.image_size
    }

    /// LiDAR point expressed in the camera frame.
    pub fn to_camera(&self, p: [f64; 3]) -> Vector3<f64> {
        (self.extrinsic * Vector4::new(p[0], p[1], p[2], 1.0)).xyz()
    }
}

/// Pixel coordinates, validity mask and camera depth of every point.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    pub pixels: Vec<[f64; 2]>,
    pub mask: Vec<bool>,
    pub depth: Vec<f64>,
}

impl Correspondence {
    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Dense `width x height x channels` raster, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::InvalidInput(format!(
                "{} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite pixel value at {i}")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: &[f32]) -> Self {
        let data = (0..width * height).flat_map(|_| value.iter().copied()).collect();
        Self {
            width,
            height,
            channels: value.len(),
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, u: usize, v: usize) -> &[f32] {
        let start = (v * self.width + u) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn pixel_mut(&mut self, u: usize, v: usize) -> &mut [f32] {
        let start = (v * self.width + u) * self.channels;
        &mut self.data[start..start + self.channels]
    }
}

/// Projects every point through the extrinsic then the intrinsic matrix,
/// dividing by camera-frame depth. Points behind the camera or outside the
/// image get `mask = false` and zero pixel coordinates.
pub fn project_points(cloud: &PointCloud, calib: &CalibrationParams) -> Correspondence {
    let (w, h) = calib.image_size;
    let n = cloud.len();
    let mut out = Correspondence {
        pixels: vec![[0.0; 2]; n],
        mask: vec![false; n],
        depth: vec![0.0; n],
    };
    for (i, &p) in cloud.coords().iter().enumerate() {
        let cam = calib.to_camera(p);
        out.depth[i] = cam.z;
        if cam.z <= DEPTH_EPSILON {
            continue;
        }
        let pix = calib.intrinsic * (cam / cam.z);
        let (u, v) = (pix.x, pix.y);
        if u >= 0.0 && u < w as f64 && v >= 0.0 && v < h as f64 {
            out.pixels[i] = [u, v];
            out.mask[i] = true;
        }
    }
    out
}

/// Nearest pixel to a projected coordinate (round half up, clamped).
pub fn nearest_pixel(coord: f64, size: usize) -> usize {
    let r = (coord + 0.5).floor();
    if r < 0.0 {
        0
    } else {
        (r as usize).min(size - 1)
    }
}

/// Attaches the image value at each point's nearest pixel plus a trailing
/// validity channel. Points without a correspondence get zeros.
pub fn paint_points(cloud: &PointCloud, image: &ImagePlane, corr: &Correspondence) -> Result<PointCloud> {
    paint_points_multi(cloud, &[(image, corr)])
}

/// Multi-camera painting: masks are OR-ed and each point takes its value from
/// the first camera that sees it.
pub fn paint_points_multi(
    cloud: &PointCloud,
    views: &[(&ImagePlane, &Correspondence)],
) -> Result<PointCloud> {
    let Some(channels) = views.first().map(|(img, _)| img.channels()) else {
        return Err(Error::InvalidArgument("no camera views to paint from".into()));
    };
    for (img, corr) in views {
        if img.channels() != channels {
            return Err(Error::InvalidArgument(
                "camera views have different channel counts".into(),
            ));
        }
        if corr.mask.len() != cloud.len() {
            return Err(Error::InvalidArgument(format!(
                "correspondence covers {} points, cloud has {}",
                corr.mask.len(),
                cloud.len()
            )));
        }
    }
    let dim = channels + 1;
    let mut values = vec![0.0; cloud.len() * dim];
    for i in 0..cloud.len() {
        let row = &mut values[i * dim..(i + 1) * dim];
        if let Some((img, corr)) = views.iter().find(|(_, c)| c.mask[i]) {
            let [u, v] = corr.pixels[i];
            let px = img.pixel(nearest_pixel(u, img.width()), nearest_pixel(v, img.height()));
            for (dst, &src) in row.iter_mut().zip(px) {
                *dst = f64::from(src);
            }
            row[channels] = 1.0;
        }
    }
    cloud.clone().with_painted(Painted::new(dim, values)?)
}

/// Value and gradient (w.r.t. the first argument) of a masked cosine loss.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineLoss {
    pub loss: f64,
    pub grad: Array2<f64>,
}

/// `(1/ΣM) Σ M·(1 − cos(F_p, F_img))`.
///
/// Zero-norm rows contribute a loss of 1 and no gradient. Errors when no
/// point is masked in.
pub fn masked_cosine_loss(
    features_p: ArrayView2<'_, f64>,
    features_img: ArrayView2<'_, f64>,
    mask: &[bool],
) -> Result<CosineLoss> {
    if features_p.dim() != features_img.dim() {
        return Err(Error::InvalidArgument(format!(
            "feature shapes differ: {:?} vs {:?}",
            features_p.dim(),
            features_img.dim()
        )));
    }
    if features_p.nrows() != mask.len() {
        return Err(Error::InvalidArgument("mask length differs from feature rows".into()));
    }
    if features_p.ncols() == 0 {
        return Err(Error::InvalidArgument("features must have at least one channel".into()));
    }
    let valid = mask.iter().filter(|&&m| m).count();
    if valid == 0 {
        return Err(Error::EmptyInput("cosine loss over an empty mask".into()));
    }
    let scale = 1.0 / valid as f64;
    let mut grad = Array2::zeros(features_p.dim());
    let mut total = 0.0;
    for (i, &m) in mask.iter().enumerate() {
        if !m {
            continue;
        }
        let f = features_p.row(i);
        let g = features_img.row(i);
        let nf = f.dot(&f).sqrt();
        let ng = g.dot(&g).sqrt();
        if nf == 0.0 || ng == 0.0 {
            total += 1.0;
            continue;
        }
        let cos = f.dot(&g) / (nf * ng);
        total += 1.0 - cos;
        let mut row = grad.row_mut(i);
        for k in 0..f.len() {
            row[k] = -scale * (g[k] / ng - cos * f[k] / nf) / nf;
        }
    }
    Ok(CosineLoss {
        loss: total * scale,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn k_matrix() -> Matrix3<f64> {
        Matrix3::new(100.0, 0.0, 64.0, 0.0, 100.0, 32.0, 0.0, 0.0, 1.0)
    }

    fn lidar_to_camera() -> Matrix4<f64> {
        Matrix4::new(
            0.0, -1.0, 0.0, 0.0, //
            0.0, 0.0, -1.0, 0.0, //
            1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        )
    }

    #[test]
    fn principal_point_ray() {
        let calib = CalibrationParams::new(k_matrix(), Matrix4::identity(), (128, 64)).unwrap();
        let cloud = PointCloud::from_coords(vec![[0.0, 0.0, 2.0]]).unwrap();
        let c = project_points(&cloud, &calib);
        assert_eq!(c.pixels[0], [64.0, 32.0]);
        assert!(c.mask[0]);

        let small = CalibrationParams::new(k_matrix(), Matrix4::identity(), (64, 64)).unwrap();
        assert!(!project_points(&cloud, &small).mask[0]);
    }

    #[test]
    fn rotated_frame_and_depth_gate() {
        let calib = CalibrationParams::new(k_matrix(), lidar_to_camera(), (128, 64)).unwrap();
        let cloud = PointCloud::from_coords(vec![[10.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]).unwrap();
        let c = project_points(&cloud, &calib);
        assert_eq!(c.pixels[0], [64.0, 32.0]);
        assert_eq!(c.depth[0], 10.0);
        assert!(c.mask[0]);
        assert!(!c.mask[1]);
        assert_eq!(c.pixels[1], [0.0, 0.0]);
        assert_eq!(c.depth[1], -1.0);
    }

    #[test]
    fn rejects_bad_calibration() {
        let mut k = k_matrix();
        k[(2, 2)] = 2.0;
        assert!(CalibrationParams::new(k, Matrix4::identity(), (8, 8)).is_err());
        let mut k = k_matrix();
        k[(0, 0)] = -1.0;
        assert!(CalibrationParams::new(k, Matrix4::identity(), (8, 8)).is_err());
        let mut e = Matrix4::identity();
        e[(0, 0)] = -1.0;
        assert!(CalibrationParams::new(k_matrix(), e, (8, 8)).is_err());
        let mut e = Matrix4::identity();
        e[(0, 1)] = 0.1;
        assert!(CalibrationParams::new(k_matrix(), e, (8, 8)).is_err());
        assert!(CalibrationParams::new(k_matrix(), Matrix4::identity(), (0, 8)).is_err());
    }

    #[test]
    fn painting_rules() {
        let img = ImagePlane::filled(32, 32, &[0.5]);
        let cloud = PointCloud::from_coords(vec![[0.0; 3]; 3]).unwrap();
        let corr = Correspondence {
            pixels: vec![[10.0, 21.0], [0.0, 0.0], [10.4, 20.6]],
            mask: vec![true, false, true],
            depth: vec![1.0; 3],
        };
        let painted = paint_points(&cloud, &img, &corr).unwrap();
        let p = painted.painted().unwrap();
        assert_eq!(p.dim(), 2);
        assert_eq!(p.row(0), &[0.5, 1.0]);
        assert_eq!(p.row(1), &[0.0, 0.0]);

        let mut img = ImagePlane::filled(32, 32, &[0.0]);
        img.pixel_mut(10, 21)[0] = 7.0;
        let painted = paint_points(&cloud, &img, &corr).unwrap();
        assert_eq!(painted.painted().unwrap().row(2), &[7.0, 1.0]);
    }

    #[test]
    fn half_pixels_round_up() {
        assert_eq!(nearest_pixel(10.5, 32), 11);
        assert_eq!(nearest_pixel(10.49, 32), 10);
        assert_eq!(nearest_pixel(31.9, 32), 31);
    }

    #[test]
    fn multi_camera_first_valid_wins() {
        let cloud = PointCloud::from_coords(vec![[0.0; 3]; 2]).unwrap();
        let left = ImagePlane::filled(4, 4, &[1.0]);
        let right = ImagePlane::filled(4, 4, &[2.0]);
        let cl = Correspondence {
            pixels: vec![[1.0, 1.0], [0.0, 0.0]],
            mask: vec![true, false],
            depth: vec![1.0; 2],
        };
        let cr = Correspondence {
            pixels: vec![[1.0, 1.0], [2.0, 2.0]],
            mask: vec![true, true],
            depth: vec![1.0; 2],
        };
        let out = paint_points_multi(&cloud, &[(&left, &cl), (&right, &cr)]).unwrap();
        assert_eq!(out.painted().unwrap().values(), &[1.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn cosine_loss_examples() {
        let m = [true, true];
        let f = array![[1.0, 2.0], [0.5, -1.0]];
        assert!(masked_cosine_loss(f.view(), f.view(), &m).unwrap().loss.abs() < 1e-15);

        let a = array![[1.0, 0.0]];
        let b = array![[0.0, 3.0]];
        assert!((masked_cosine_loss(a.view(), b.view(), &[true]).unwrap().loss - 1.0).abs() < 1e-15);
        let c = array![[-2.0, 0.0]];
        assert!((masked_cosine_loss(a.view(), c.view(), &[true]).unwrap().loss - 2.0).abs() < 1e-15);

        let z = array![[0.0, 0.0]];
        let out = masked_cosine_loss(z.view(), a.view(), &[true]).unwrap();
        assert_eq!(out.loss, 1.0);
        assert_eq!(out.grad, array![[0.0, 0.0]]);

        assert!(matches!(
            masked_cosine_loss(a.view(), b.view(), &[false]),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn masked_rows_are_ignored() {
        let f = array![[1.0, 0.0], [1.0, 0.0]];
        let g = array![[1.0, 0.0], [-1.0, 0.0]];
        let out = masked_cosine_loss(f.view(), g.view(), &[true, false]).unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.grad.row(1).sum(), 0.0);
    }
}
