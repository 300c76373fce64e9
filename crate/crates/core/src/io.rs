//! On-disk formats: KITTI scans and labels, PPM/FMAP images, weight files,
//! calibration text and dataset directories.
//!
//! Decoders work on byte slices and report the byte offset of the first
//! problem. The path-based wrappers only add file access.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix4};
use ndarray::{Array1, Array2};

use crate::camera::{CalibrationParams, ImagePlane};
use crate::cloud::{Painted, PointCloud};
use crate::error::{Error, Result};
use crate::ssl::model::ModelParams;

const FMAP_MAGIC: &[u8; 4] = b"FMAP";

fn io_err(path: &Path, err: std::io::Error) -> Error {
    Error::Io(format!("{}: {err}", path.display()))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| io_err(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Prefixes a decoder error with the file it came from, keeping the offset.
fn in_file(path: &Path, err: Error) -> Error {
    match err {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    }
}

fn f32_at(bytes: &[u8], offset: usize) -> f32 {
    f32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

// ---- KITTI scans ----

/// Little-endian `f32` quadruples `x y z intensity`.
pub fn decode_scan(bytes: &[u8]) -> Result<PointCloud> {
    if !bytes.len().is_multiple_of(16) {
        let offset = bytes.len() - bytes.len() % 16;
        return Err(Error::format(
            offset as u64,
            format!("scan length {} is not a multiple of 16", bytes.len()),
        ));
    }
    let n = bytes.len() / 16;
    let mut coords = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    for i in 0..n {
        let at = i * 16;
        let v = [0, 4, 8, 12].map(|k| f32_at(bytes, at + k));
        if let Some(k) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::format((at + 4 * k) as u64, "non-finite value"));
        }
        coords.push([f64::from(v[0]), f64::from(v[1]), f64::from(v[2])]);
        intensity.push(f64::from(v[3]));
    }
    PointCloud::new(coords, intensity)
}

pub fn encode_scan(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * 16);
    for (p, &i) in cloud.coords().iter().zip(cloud.intensity()) {
        for v in [p[0], p[1], p[2], i] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// `u32` per point: semantic id in the low 16 bits, instance id in the high 16.
pub fn decode_labels(bytes: &[u8], points: usize) -> Result<(Vec<u16>, Vec<u16>)> {
    if !bytes.len().is_multiple_of(4) {
        let offset = bytes.len() - bytes.len() % 4;
        return Err(Error::format(offset as u64, "label file length is not a multiple of 4"));
    }
    if bytes.len() / 4 != points {
        let offset = bytes.len().min(points * 4);
        return Err(Error::format(
            offset as u64,
            format!("{} labels for {points} points", bytes.len() / 4),
        ));
    }
    let raw = (0..points).map(|i| u32_at(bytes, 4 * i));
    Ok(raw.map(|v| ((v & 0xffff) as u16, (v >> 16) as u16)).unzip())
}

pub fn encode_labels(labels: &[u16], instances: Option<&[u16]>) -> Vec<u8> {
    let mut out = Vec::with_capacity(labels.len() * 4);
    for (i, &l) in labels.iter().enumerate() {
        let inst = instances.map_or(0, |ins| u32::from(ins[i]));
        out.extend_from_slice(&((inst << 16) | u32::from(l)).to_le_bytes());
    }
    out
}

/// Reads a `.bin` scan and, if given, its `.label` file.
pub fn read_scan(bin: &Path, labels: Option<&Path>) -> Result<PointCloud> {
    let cloud = decode_scan(&read_bytes(bin)?).map_err(|e| in_file(bin, e))?;
    match labels {
        None => Ok(cloud),
        Some(path) => {
            let (sem, inst) = decode_labels(&read_bytes(path)?, cloud.len()).map_err(|e| in_file(path, e))?;
            cloud.with_labels(sem)?.with_instances(inst)
        }
    }
}

/// Writes the scan and, when the cloud has labels and a path is given, the label file.
pub fn write_scan(cloud: &PointCloud, bin: &Path, labels: Option<&Path>) -> Result<()> {
    write_bytes(bin, &encode_scan(cloud))?;
    if let (Some(path), Some(l)) = (labels, cloud.labels()) {
        write_bytes(path, &encode_labels(l, cloud.instances()))?;
    }
    Ok(())
}

// ---- images ----

/// `FMAP`, then `u32` width, height, depth, then `f32` values row-major with
/// channels innermost. Everything little-endian.
pub fn decode_fmap(bytes: &[u8]) -> Result<ImagePlane> {
    if bytes.len() < 16 {
        return Err(Error::format(bytes.len() as u64, "feature map header needs 16 bytes"));
    }
    if &bytes[..4] != FMAP_MAGIC {
        return Err(Error::format(0, "bad magic, expected FMAP"));
    }
    let (w, h, d) = (u32_at(bytes, 4) as usize, u32_at(bytes, 8) as usize, u32_at(bytes, 12) as usize);
    let count = w
        .checked_mul(h)
        .and_then(|v| v.checked_mul(d))
        .ok_or_else(|| Error::format(4, "dimensions overflow"))?;
    let expected = count.checked_mul(4).and_then(|v| v.checked_add(16));
    if expected != Some(bytes.len()) {
        let offset = match expected {
            Some(e) => e.min(bytes.len()),
            None => 4,
        };
        return Err(Error::format(
            offset as u64,
            format!("{w}x{h}x{d} feature map needs {count} floats, payload has {} bytes", bytes.len() - 16),
        ));
    }
    let mut data = Vec::with_capacity(count);
    for i in 0..count {
        let v = f32_at(bytes, 16 + 4 * i);
        if !v.is_finite() {
            return Err(Error::format((16 + 4 * i) as u64, "non-finite value"));
        }
        data.push(v);
    }
    ImagePlane::new(w, h, d, data)
}

pub fn encode_fmap(image: &ImagePlane) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + image.data().len() * 4);
    out.extend_from_slice(FMAP_MAGIC);
    for v in [image.width(), image.height(), image.channels()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in image.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Binary PPM (`P6`), 8-bit, scaled to `[0, 1]`.
pub fn decode_ppm(bytes: &[u8]) -> Result<ImagePlane> {
    if !bytes.starts_with(b"P6") {
        return Err(Error::format(0, "bad magic, expected P6"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(pos as u64, "expected a header number"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::format(start as u64, "header number out of range"))?;
    }
    let [w, h, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(Error::format(pos as u64, format!("unsupported maxval {maxval}")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format(pos as u64, "expected whitespace after header"));
    }
    pos += 1;
    let need = w * h * 3;
    if bytes.len() - pos != need {
        return Err(Error::format(
            (pos + need.min(bytes.len() - pos)) as u64,
            format!("{w}x{h} pixmap needs {need} payload bytes, found {}", bytes.len() - pos),
        ));
    }
    let scale = maxval as f32;
    let data = bytes[pos..].iter().map(|&b| f32::from(b) / scale).collect();
    ImagePlane::new(w, h, 3, data)
}

/// Values are clamped to `[0, 1]` and rounded to 8 bits. Needs 3 channels.
pub fn encode_ppm(image: &ImagePlane) -> Result<Vec<u8>> {
    if image.channels() != 3 {
        return Err(Error::InvalidArgument(format!(
            "PPM needs 3 channels, image has {}",
            image.channels()
        )));
    }
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

/// Dispatches on the file's magic bytes.
pub fn decode_image(bytes: &[u8]) -> Result<ImagePlane> {
    if bytes.starts_with(b"P6") {
        decode_ppm(bytes)
    } else {
        decode_fmap(bytes)
    }
}

pub fn read_image(path: &Path) -> Result<ImagePlane> {
    decode_image(&read_bytes(path)?).map_err(|e| in_file(path, e))
}

// ---- painted channels, weights, prototypes ----

/// Painted channels as an FMAP with width 1, height N, depth = channel count.
pub fn encode_painted(painted: &Painted) -> Vec<u8> {
    let data = painted.values().iter().map(|&v| v as f32).collect();
    let image = ImagePlane::new(1, painted.len(), painted.dim(), data).expect("consistent painted layout");
    encode_fmap(&image)
}

pub fn decode_painted(bytes: &[u8]) -> Result<Painted> {
    let image = decode_fmap(bytes)?;
    if image.width() != 1 {
        return Err(Error::format(4, "painted map must have width 1"));
    }
    Painted::new(image.channels(), image.data().iter().map(|&v| f64::from(v)).collect())
}

/// Classifier as an FMAP: width `d + 1` (bias last), height `C`, depth 1.
pub fn encode_weights(model: &ModelParams) -> Vec<u8> {
    let (c, d) = model.weights.dim();
    let mut data = Vec::with_capacity(c * (d + 1));
    for k in 0..c {
        data.extend(model.weights.row(k).iter().map(|&v| v as f32));
        data.push(model.bias[k] as f32);
    }
    encode_fmap(&ImagePlane::new(d + 1, c, 1, data).expect("consistent weight layout"))
}

pub fn decode_weights(bytes: &[u8]) -> Result<ModelParams> {
    let image = decode_fmap(bytes)?;
    if image.channels() != 1 || image.width() < 2 || image.height() == 0 {
        return Err(Error::format(4, "weights need depth 1, width >= 2 and height >= 1"));
    }
    let (w, c) = (image.width(), image.height());
    let values = image.data();
    let weights = Array2::from_shape_fn((c, w - 1), |(k, j)| f64::from(values[k * w + j]));
    let bias = Array1::from_shape_fn(c, |k| f64::from(values[k * w + w - 1]));
    Ok(ModelParams {
        weights,
        bias,
        projection: None,
    })
}

/// One whitespace-separated row of floats per class; `#` starts a comment.
pub fn parse_prototypes(text: &str) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut offset = 0u64;
    for raw in text.split_inclusive('\n') {
        let line_offset = offset;
        offset += raw.len() as u64;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::format(line_offset, format!("bad prototype row `{line}`")))?;
        if rows.first().is_some_and(|r| r.len() != row.len()) {
            return Err(Error::format(line_offset, "prototype rows differ in length"));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::format(0, "no prototype rows"));
    }
    let d = rows[0].len();
    Ok(Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j]))
}

pub fn format_prototypes(table: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in table.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

// ---- calibration ----

/// Parses KITTI calibration text (`P2:` plus `Tr:` or `Tr_velo_to_cam:`,
/// optional `R0_rect:`). The fourth column of `P2` is folded into the
/// extrinsic through `K^-1`.
pub fn parse_kitti_calib(text: &str, image_size: (usize, usize)) -> Result<CalibrationParams> {
    let mut p2 = None;
    let mut tr = None;
    let mut r0 = None;
    let mut offset = 0u64;
    for raw in text.split_inclusive('\n') {
        let line_offset = offset;
        offset += raw.len() as u64;
        let Some((key, rest)) = raw.split_once(':') else {
            if raw.trim().is_empty() {
                continue;
            }
            return Err(Error::format(line_offset, "expected `key: values`"));
        };
        let values = rest
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| Error::format(line_offset, format!("non-numeric entry in `{}`", key.trim())))?;
        let want = |n: usize| {
            if values.len() == n {
                Ok(values.clone())
            } else {
                Err(Error::format(line_offset, format!("`{}` needs {n} values", key.trim())))
            }
        };
        match key.trim() {
            "P2" => p2 = Some(want(12)?),
            "Tr" | "Tr_velo_to_cam" => tr = Some(want(12)?),
            "R0_rect" => r0 = Some(want(9)?),
            _ => {}
        }
    }
    let p2 = p2.ok_or_else(|| Error::format(offset, "missing P2"))?;
    let tr = tr.ok_or_else(|| Error::format(offset, "missing Tr"))?;
    let k = Matrix3::new(p2[0], p2[1], p2[2], p2[4], p2[5], p2[6], p2[8], p2[9], p2[10]);
    let k_inv = k
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("P2 intrinsic block is singular".into()))?;
    let shift = k_inv * nalgebra::Vector3::new(p2[3], p2[7], p2[11]);
    let mut offset_m = Matrix4::identity();
    offset_m.fixed_view_mut::<3, 1>(0, 3).copy_from(&shift);
    let mut velo = Matrix4::identity();
    for r in 0..3 {
        for c in 0..4 {
            velo[(r, c)] = tr[4 * r + c];
        }
    }
    let mut rect = Matrix4::identity();
    if let Some(r0) = r0 {
        for r in 0..3 {
            for c in 0..3 {
                rect[(r, c)] = r0[3 * r + c];
            }
        }
    }
    CalibrationParams::new(k, offset_m * rect * velo, image_size)
}

// ---- dataset directories ----

/// Frames of a KITTI-style directory: `velodyne/<stem>.bin` with optional
/// `labels/<stem>.label` and `painted/<stem>.fmap`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub names: Vec<String>,
    pub clouds: Vec<PointCloud>,
}

/// Sorted stems of `dir/<sub>/*.<ext>`.
pub fn list_stems(dir: &Path, sub: &str, ext: &str) -> Result<Vec<String>> {
    let path = dir.join(sub);
    let mut stems = Vec::new();
    for entry in fs::read_dir(&path).map_err(|e| io_err(&path, e))? {
        let entry = entry.map_err(|e| io_err(&path, e))?;
        let p = entry.path();
        if p.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_owned());
            }
        }
    }
    stems.sort();
    Ok(stems)
}

pub fn frame_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join("velodyne").join(format!("{stem}.bin")),
        dir.join("labels").join(format!("{stem}.label")),
        dir.join("painted").join(format!("{stem}.fmap")),
    )
}

pub fn read_frame(dir: &Path, stem: &str) -> Result<PointCloud> {
    let (bin, label, painted) = frame_paths(dir, stem);
    let mut cloud = read_scan(&bin, label.exists().then_some(label.as_path()))?;
    if painted.exists() {
        let p = decode_painted(&read_bytes(&painted)?).map_err(|e| in_file(&painted, e))?;
        cloud = cloud.with_painted(p)?;
    }
    Ok(cloud)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let names = list_stems(dir, "velodyne", "bin")?;
    let clouds = names.iter().map(|s| read_frame(dir, s)).collect::<Result<_>>()?;
    Ok(Dataset { names, clouds })
}

pub fn write_frame(dir: &Path, stem: &str, cloud: &PointCloud) -> Result<()> {
    let (bin, label, painted) = frame_paths(dir, stem);
    write_scan(cloud, &bin, Some(&label))?;
    if let Some(p) = cloud.painted() {
        write_bytes(&painted, &encode_painted(p))?;
    }
    Ok(())
}

pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    for (name, cloud) in dataset.names.iter().zip(&dataset.clouds) {
        write_frame(dir, name, cloud)?;
    }
    Ok(())
}
