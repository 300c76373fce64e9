//! WebAssembly bindings for the browser demo.
//!
//! Each exported function regenerates its synthetic scenes from the seed it
//! is given, so the page holds no state between calls. The `*_rgba` outputs
//! are row-major RGBA buffers ready for `ImageData`.

use wasm_bindgen::prelude::*;

use lasermix::geometry::{make_inclination_partition, range_view_rasterize, BeamPartition, RangeImage};
use lasermix::mixing::laser_mix;
use lasermix::priors::{class_area_distribution, prior_heatmap};
use lasermix::synth::{self, SceneSpec};
use lasermix::{PointCloud, Result, IGNORE_LABEL};

const PALETTE: [[u8; 3]; 8] = [
    [150, 110, 70],
    [70, 130, 200],
    [220, 60, 60],
    [240, 200, 40],
    [60, 170, 80],
    [170, 90, 200],
    [40, 200, 200],
    [230, 130, 40],
];
const EMPTY: [u8; 3] = [16, 16, 20];
const GAP: [u8; 3] = [255, 255, 255];

fn template() -> SceneSpec {
    SceneSpec::default_template()
}

/// One band per beam so every laser ring gets its own raster row.
fn beam_rows(spec: &SceneSpec) -> Result<BeamPartition> {
    let beams = &spec.beam_inclinations;
    let half = if beams.len() > 1 { (beams[1] - beams[0]) / 2.0 } else { 0.01 };
    make_inclination_partition(beams[0] - half, beams[beams.len() - 1] + half, beams.len())
}

/// Sensor inclination range split into `areas` equal bands.
fn area_bands(spec: &SceneSpec, areas: usize) -> Result<BeamPartition> {
    let beams = &spec.beam_inclinations;
    let pad = 0.5f64.to_radians();
    make_inclination_partition(beams[0] - pad, beams[beams.len() - 1] + pad, areas)
}

fn scene(seed: u64) -> Result<PointCloud> {
    synth::simulate_scan(&synth::perturb_scene(&template(), seed))
}

fn push_panel(out: &mut Vec<u8>, img: &RangeImage) {
    // top row of the panel is the highest beam
    for row in (0..img.height()).rev() {
        for col in 0..img.width() {
            let c = match img.class(row, col) {
                IGNORE_LABEL => EMPTY,
                k => PALETTE[usize::from(k) % PALETTE.len()],
            };
            out.extend([c[0], c[1], c[2], 255]);
        }
    }
}

fn push_gap(out: &mut Vec<u8>, width: usize) {
    for _ in 0..width {
        out.extend([GAP[0], GAP[1], GAP[2], 255]);
    }
}

/// Range views of scan A, scan B and both LaserMix outputs stacked top to
/// bottom, separated by one white row. Height is `4 * beams + 3`.
pub fn mix_range_views(seed_a: u64, seed_b: u64, areas: usize, width: usize) -> Result<Vec<u8>> {
    let spec = template();
    let a = scene(seed_a)?;
    let b = scene(seed_b)?;
    let mix = laser_mix(&a, &b, &area_bands(&spec, areas)?)?;
    let rows = beam_rows(&spec)?;
    let mut out = Vec::new();
    for (k, cloud) in [&a, &b, &mix.mixed_a, &mix.mixed_b].into_iter().enumerate() {
        if k > 0 {
            push_gap(&mut out, width);
        }
        push_panel(&mut out, &range_view_rasterize(cloud, &rows, width)?);
    }
    Ok(out)
}

/// Occupancy likelihood of one class over `scenes` scans, `areas` rows high,
/// drawn on a black-to-class-color ramp with the top row highest.
pub fn prior_heatmap_rgba(class_id: u16, areas: usize, width: usize, scenes: usize, seed: u64) -> Result<Vec<u8>> {
    let spec = template();
    let clouds = synth::make_benchmark(&spec, scenes, seed)?;
    let map = prior_heatmap(&clouds, &area_bands(&spec, areas)?, class_id, width, spec.num_classes())?;
    let color = PALETTE[usize::from(class_id) % PALETTE.len()];
    let mut out = Vec::with_capacity(map.values.len() * 4);
    for row in (0..map.height).rev() {
        for col in 0..map.width {
            let v = map.get(row, col);
            out.extend(color.map(|c| (f64::from(c) * v).round() as u8));
            out.push(255);
        }
    }
    Ok(out)
}

/// `[H(Y), H(Y|A) for m = 1..=max_areas]` in nats over `scenes` scans.
pub fn entropy_curve(max_areas: usize, scenes: usize, seed: u64) -> Result<Vec<f64>> {
    let spec = template();
    let clouds = synth::make_benchmark(&spec, scenes, seed)?;
    let mut out = Vec::with_capacity(max_areas + 1);
    for m in 1..=max_areas {
        let report = class_area_distribution(&clouds, &area_bands(&spec, m)?, spec.num_classes())?;
        if m == 1 {
            out.push(report.marginal_entropy);
        }
        out.push(report.conditional_entropy);
    }
    Ok(out)
}

fn js(e: lasermix::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = mixRangeViews)]
pub fn mix_range_views_js(seed_a: u32, seed_b: u32, areas: usize, width: usize) -> std::result::Result<Vec<u8>, JsError> {
    mix_range_views(seed_a.into(), seed_b.into(), areas, width).map_err(js)
}

#[wasm_bindgen(js_name = priorHeatmap)]
pub fn prior_heatmap_js(class_id: u16, areas: usize, width: usize, scenes: usize, seed: u32) -> std::result::Result<Vec<u8>, JsError> {
    prior_heatmap_rgba(class_id, areas, width, scenes, seed.into()).map_err(js)
}

#[wasm_bindgen(js_name = entropyCurve)]
pub fn entropy_curve_js(max_areas: usize, scenes: usize, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    entropy_curve(max_areas, scenes, seed.into()).map_err(js)
}

/// Class names of the built-in template, one per line.
#[wasm_bindgen(js_name = classNames)]
pub fn class_names() -> String {
    template().class_names.join("\n")
}

/// Beam count of the built-in template.
#[wasm_bindgen(js_name = beamCount)]
pub fn beam_count() -> usize {
    template().beam_inclinations.len()
}

/// RGB of a class in the demo palette.
#[wasm_bindgen(js_name = classColor)]
pub fn class_color(class_id: u16) -> Vec<u8> {
    PALETTE[usize::from(class_id) % PALETTE.len()].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_views_stack_four_panels() {
        let width = 90;
        let rgba = mix_range_views(1, 2, 4, width).unwrap();
        assert_eq!(rgba.len(), width * (4 * beam_count() + 3) * 4);
        // first gap row is white
        let gap = beam_count() * width * 4;
        assert_eq!(&rgba[gap..gap + 4], &[255, 255, 255, 255]);
        assert!(rgba.chunks(4).any(|px| px[..3] == PALETTE[0]));
    }

    #[test]
    fn mixed_panels_take_rows_from_both_scans() {
        let width = 120;
        let rgba = mix_range_views(3, 9, 2, width).unwrap();
        let beams = beam_count();
        let panel = |k: usize| -> Vec<u8> {
            let start = k * (beams + 1) * width * 4;
            rgba[start..start + beams * width * 4].to_vec()
        };
        let row_of = |p: &[u8], r: usize| p[r * width * 4..(r + 1) * width * 4].to_vec();
        let (a, b, mixed) = (panel(0), panel(1), panel(2));
        // bottom row (lowest beam, area 0) comes from A, top row from B
        assert_eq!(row_of(&mixed, beams - 1), row_of(&a, beams - 1));
        assert_eq!(row_of(&mixed, 0), row_of(&b, 0));
    }

    #[test]
    fn ground_heatmap_fills_the_lowest_rows() {
        let (areas, width) = (4, 36);
        let rgba = prior_heatmap_rgba(0, areas, width, 6, 0).unwrap();
        assert_eq!(rgba.len(), areas * width * 4);
        let brightness = |row: usize| -> u32 {
            rgba[row * width * 4..(row + 1) * width * 4].iter().map(|&v| u32::from(v)).sum()
        };
        assert!(brightness(areas - 1) > brightness(0));
        assert!(prior_heatmap_rgba(40, areas, width, 2, 0).is_err());
    }

    #[test]
    fn entropy_curve_starts_at_the_marginal() {
        let curve = entropy_curve(6, 6, 0).unwrap();
        assert_eq!(curve.len(), 7);
        assert!((curve[0] - curve[1]).abs() < 1e-12);
        assert!(curve[1..].iter().all(|&h| h <= curve[0] + 1e-12));
        assert!(curve[6] < curve[0] - 0.1);
    }

    #[test]
    fn names_match_the_palette() {
        assert_eq!(class_names().lines().count(), 5);
        assert_eq!(class_color(2), PALETTE[2].to_vec());
    }
}
