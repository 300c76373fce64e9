//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Every criterion except the
//! semi-supervised uplift fails the process; the uplift line is reported
//! either way and only fails the process under `LMK_ACCEPTANCE_STRICT=1`.

#[path = "../../core/tests/support/gradcheck.rs"]
mod gradcheck;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lasermix::camera::{project_points, CalibrationParams};
use lasermix::geometry::{assign_areas, assign_grid_areas, BeamPartition, GridPartition};
use lasermix::io;
use lasermix::mixing::{self, Aabb, Parity};
use lasermix::priors::{class_area_distribution, empirical_conditional_entropy, label_entropy_given_areas};
use lasermix::ssl::{ema_update, run_semi_supervised, ModelParams, PrototypeScores, TrainConfig, TrainData, TrainStrategy};
use lasermix::synth::{self, SceneSpec};
use lasermix::{Error, Painted, PointCloud};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s as f64, || {
        format!("took {elapsed:.1?}, limit {limit_s} s")
    })
}

// ---- conservation & involution ----

type PointKey = (u64, u64, u64, u64, u16, u16, Vec<u64>);

fn multiset(clouds: &[&PointCloud]) -> HashMap<PointKey, usize> {
    let mut out = HashMap::new();
    for c in clouds {
        for i in 0..c.len() {
            let [x, y, z] = c.coords()[i];
            let key = (
                x.to_bits(),
                y.to_bits(),
                z.to_bits(),
                c.intensity()[i].to_bits(),
                c.labels().map_or(0, |l| l[i]),
                c.instances().map_or(0, |l| l[i]),
                c.painted().map_or(Vec::new(), |p| p.row(i).iter().map(|v| v.to_bits()).collect()),
            );
            *out.entry(key).or_insert(0) += 1;
        }
    }
    out
}

fn random_cloud(rng: &mut ChaCha8Rng, painted: bool) -> PointCloud {
    let n = rng.random_range(0..160);
    let coords: Vec<[f64; 3]> = (0..n)
        .map(|_| [rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(-4.0..2.0)])
        .collect();
    let intensity = (0..n).map(|_| rng.random::<f64>()).collect();
    let labels = (0..n).map(|_| rng.random_range(0..6)).collect();
    let instances = (0..n).map(|_| rng.random_range(0..4)).collect();
    let mut cloud = PointCloud::new(coords, intensity)
        .unwrap()
        .with_labels(labels)
        .unwrap()
        .with_instances(instances)
        .unwrap();
    if painted {
        let values = (0..n * 3).map(|_| rng.random::<f64>()).collect();
        cloud = cloud.with_painted(Painted::new(3, values).unwrap()).unwrap();
    }
    cloud
}

fn random_partition(rng: &mut ChaCha8Rng) -> BeamPartition {
    let m = rng.random_range(1..=8);
    let mut bounds: Vec<f64> = (0..=m).map(|_| rng.random_range(-0.6..0.3)).collect();
    bounds.sort_by(f64::total_cmp);
    bounds.dedup();
    if bounds.len() < 2 {
        bounds = vec![-0.4, 0.1];
    }
    BeamPartition::new(bounds).unwrap()
}

fn conservation() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for pair in 0..1000u64 {
        let painted = pair % 4 == 0;
        let a = random_cloud(&mut rng, painted);
        let b = random_cloud(&mut rng, painted);
        let part = random_partition(&mut rng);
        let both = multiset(&[&a, &b]);
        let grid = GridPartition::new(part.clone(), rng.random_range(1..6)).unwrap();
        let scene = Aabb::bounding(&[&a, &b]).unwrap_or(Aabb::new([0.0; 3], [1.0; 3]));
        let region = mixing::random_box(&scene, 1.0, 20.0, pair).unwrap();
        let mixes = [
            ("laser_mix", mixing::laser_mix(&a, &b, &part)),
            ("multi_modal_laser_mix", mixing::multi_modal_laser_mix(&a, &b, &part)),
            ("grid_mix", mixing::grid_mix(&a, &b, &grid)),
            ("point_mixup", mixing::point_mixup(&a, &b, rng.random(), pair)),
            ("cutmix_area", mixing::cutmix_area(&a, &b, &region)),
        ];
        for (name, mix) in mixes {
            let mix = mix.map_err(|e| format!("pair {pair}: {name} failed: {e}"))?;
            ensure(multiset(&[&mix.mixed_a, &mix.mixed_b]) == both, || {
                format!("pair {pair}: {name} changed the point multiset")
            })?;
        }
        let concat = mixing::scene_concat(&a, &b).map_err(|e| e.to_string())?;
        ensure(multiset(&[&concat]) == both, || format!("pair {pair}: scene_concat"))?;
        let kept = mixing::cutout_area(&a, &part, Parity::Odd);
        let dropped = mixing::cutout_area(&a, &part, Parity::Even);
        ensure(multiset(&[&kept, &dropped]) == multiset(&[&a]), || format!("pair {pair}: cutout_area"))?;

        let once = mixing::laser_mix(&a, &b, &part).unwrap();
        let twice = mixing::laser_mix(&once.mixed_a, &once.mixed_b, &part).unwrap();
        ensure(
            multiset(&[&twice.mixed_a]) == multiset(&[&a]) && multiset(&[&twice.mixed_b]) == multiset(&[&b]),
            || format!("pair {pair}: double laser_mix did not restore the inputs"),
        )?;
    }
    let elapsed = start.elapsed();
    within(elapsed, 30)?;
    Ok(format!("1000 pairs, 6 mixes each, involution holds ({elapsed:.1?})"))
}

// ---- partition oracle ----

fn brute_area(bounds: &[f64], phi: f64) -> usize {
    let m = bounds.len() - 1;
    if phi < bounds[0] {
        return 0;
    }
    for k in 0..m {
        let last = k == m - 1;
        if bounds[k] <= phi && (phi < bounds[k + 1] || (last && phi <= bounds[k + 1])) {
            return k;
        }
    }
    m - 1
}

fn brute_sector(alpha: f64, sectors: usize) -> usize {
    let width = 2.0 * PI / sectors as f64;
    (0..sectors)
        .find(|&s| {
            let lo = -PI + s as f64 * width;
            alpha >= lo && (alpha < lo + width || s == sectors - 1)
        })
        .unwrap_or(0)
}

fn partition_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    for _ in 0..10 {
        let part = random_partition(&mut rng);
        let sectors = rng.random_range(1..9);
        let grid = GridPartition::new(part.clone(), sectors).unwrap();
        let coords: Vec<[f64; 3]> = (0..1000)
            .map(|_| [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-20.0..10.0)])
            .collect();
        let cloud = PointCloud::from_coords(coords.clone()).unwrap();
        let areas = assign_areas(&cloud, &part);
        let cells = assign_grid_areas(&cloud, &grid);
        let j = part.areas();
        for (i, &[x, y, z]) in coords.iter().enumerate() {
            let phi = z.atan2(x.hypot(y));
            let alpha = y.atan2(x);
            let area = brute_area(part.bounds(), phi);
            let cell = brute_sector(alpha, sectors) * j + area;
            ensure(areas[i] == area && cells[i] == cell, || {
                format!("point {:?}: area {} vs {area}, cell {} vs {cell}", coords[i], areas[i], cells[i])
            })?;
            checked += 1;
        }
    }
    Ok(format!("{checked} points, 0 mismatches"))
}

// ---- projection contract ----

fn projection() -> Outcome {
    let k = Matrix3::new(100.0, 0.0, 64.0, 0.0, 100.0, 32.0, 0.0, 0.0, 1.0);
    let rot = Matrix4::new(
        0.0, -1.0, 0.0, 0.0, //
        0.0, 0.0, -1.0, 0.0, //
        1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    );
    let cases = [
        (Matrix4::identity(), [0.0, 0.0, 2.0], Some([64.0, 32.0])),
        (rot, [10.0, 0.0, 0.0], Some([64.0, 32.0])),
        (rot, [10.0, 1.0, 0.5], Some([54.0, 27.0])),
        (Matrix4::identity(), [0.0, 0.0, -1.0], None),
    ];
    for (ext, p, want) in cases {
        let calib = CalibrationParams::new(k, ext, (128, 64)).unwrap();
        let corr = project_points(&PointCloud::from_coords(vec![p]).unwrap(), &calib);
        match want {
            Some([u, v]) => ensure(
                corr.mask[0] && (corr.pixels[0][0] - u).abs() <= 1e-6 && (corr.pixels[0][1] - v).abs() <= 1e-6,
                || format!("{p:?} projected to {:?}, expected ({u}, {v})", corr.pixels[0]),
            )?,
            None => ensure(!corr.mask[0] && corr.pixels[0] == [0.0, 0.0], || format!("{p:?} should be masked"))?,
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut inside = 0;
    for _ in 0..100 {
        let (w, h) = (rng.random_range(8..640usize), rng.random_range(8..480usize));
        let f = rng.random_range(20.0..600.0);
        let k = Matrix3::new(f, 0.0, rng.random_range(0.0..w as f64), 0.0, f, rng.random_range(0.0..h as f64), 0.0, 0.0, 1.0);
        let r = Rotation3::from_euler_angles(rng.random_range(-PI..PI), rng.random_range(-PI..PI), rng.random_range(-PI..PI));
        let t = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let mut ext = Matrix4::identity();
        ext.fixed_view_mut::<3, 3>(0, 0).copy_from(r.matrix());
        ext.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        let calib = CalibrationParams::new(k, ext, (w, h)).unwrap();
        let coords: Vec<[f64; 3]> = (0..100)
            .map(|_| [rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0), rng.random_range(-10.0..10.0)])
            .collect();
        let corr = project_points(&PointCloud::from_coords(coords.clone()).unwrap(), &calib);
        for (i, p) in coords.iter().enumerate() {
            let cam = r * Vector3::from(*p) + t;
            if corr.mask[i] {
                let [u, v] = corr.pixels[i];
                ensure(u >= 0.0 && u < w as f64 && v >= 0.0 && v < h as f64 && corr.depth[i] > 0.0, || {
                    format!("masked-in point at ({u}, {v}) depth {} outside {w}x{h}", corr.depth[i])
                })?;
                let pix = k * (cam / cam.z);
                ensure((pix.x - u).abs() <= 1e-6 && (pix.y - v).abs() <= 1e-6, || {
                    format!("pixel ({u}, {v}) vs reference ({}, {})", pix.x, pix.y)
                })?;
                inside += 1;
            } else {
                ensure(corr.pixels[i] == [0.0, 0.0], || "masked-out point has nonzero pixel".into())?;
            }
        }
    }
    Ok(format!("4 hand cases within 1e-6 px, 10000 fuzzed points ({inside} in view)"))
}

// ---- entropy suite ----

fn entropy_suite() -> Outcome {
    for c in 2..=8 {
        let uniform = Array2::from_elem((10, c), 1.0 / c as f64);
        let h = empirical_conditional_entropy(uniform.view(), &[0; 10], 1).map_err(|e| e.to_string())?;
        ensure((h - (c as f64).ln()).abs() <= 1e-9, || format!("uniform over {c}: {h}"))?;
        let onehot = Array2::from_shape_fn((10, c), |(i, k)| if i % c == k { 1.0 } else { 0.0 });
        let h = empirical_conditional_entropy(onehot.view(), &[0; 10], 1).map_err(|e| e.to_string())?;
        ensure(h == 0.0, || format!("one-hot over {c}: {h}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for d in 0..100 {
        let n = rng.random_range(1..400);
        let m = rng.random_range(1..9);
        let c = rng.random_range(1..7);
        let areas: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
        let labels: Vec<u16> = areas
            .iter()
            .map(|&a| if rng.random_bool(0.5) { (a % c) as u16 } else { rng.random_range(0..c as u16) })
            .collect();
        let (hy, hya) = label_entropy_given_areas(&labels, &areas, m, c).map_err(|e| e.to_string())?;
        ensure(hya <= hy + 1e-12, || format!("dataset {d}: H(Y|A) {hya} > H(Y) {hy}"))?;
    }
    let (hy, hya) = label_entropy_given_areas(&[0, 1, 2, 2], &[0, 0, 1, 1], 2, 3).map_err(|e| e.to_string())?;
    ensure((hy - 1.0397).abs() <= 1e-3 && (hya - 0.3466).abs() <= 1e-3, || {
        format!("hand case gave H(Y) {hy}, H(Y|A) {hya}")
    })?;
    Ok(format!("ln C exact, one-hot 0, 100 datasets ordered, hand case {hy:.4}/{hya:.4}"))
}

// ---- gradients ----

fn gradient_suite() -> Outcome {
    use gradcheck::{check, Loss, INSTANCES};
    let start = Instant::now();
    let mut parts = Vec::new();
    for loss in [Loss::Ce, Loss::Mt, Loss::C2l, Loss::Lkg] {
        let worst = check(loss)?;
        parts.push(format!("{loss:?} {worst:.1e}"));
    }
    let elapsed = start.elapsed();
    within(elapsed, 60)?;
    Ok(format!("{INSTANCES} instances each, worst rel err {} ({elapsed:.1?})", parts.join(", ")))
}

// ---- EMA ----

fn ema_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for alpha in [0.0, 0.5, 0.9, 0.99, 0.999] {
        let start = ModelParams::seeded(4, 6, 1.0, rng.random());
        let student = ModelParams::seeded(4, 6, 1.0, rng.random());
        let mut teacher = start.clone();
        for k in 1..=100 {
            teacher = ema_update(&teacher, &student, alpha).map_err(|e| e.to_string())?;
            let decay = alpha.powi(k);
            for ((t, t0), w) in teacher.weights.iter().zip(&start.weights).zip(&student.weights) {
                let err = ((t - w).abs() - decay * (t0 - w).abs()).abs();
                let scale = t0.abs().max(w.abs());
                worst = worst.max(err / scale);
                ensure(err <= 4.0 * k as f64 * f64::EPSILON * scale, || {
                    format!("alpha {alpha}, step {k}: deviation {err:e}")
                })?;
            }
        }
    }
    Ok(format!("5 momenta x 100 steps, worst deviation {worst:.1e} of magnitude"))
}

// ---- spatial prior ----

fn spatial_prior() -> Outcome {
    let start = Instant::now();
    let template = SceneSpec::default_template();
    let clouds = synth::make_benchmark(&template, 50, 0).map_err(|e| e.to_string())?;
    let beams = &template.beam_inclinations;
    let pad = 1f64.to_radians();
    let part = lasermix::geometry::make_inclination_partition(beams[0] - pad, beams[beams.len() - 1] + pad, 8)
        .map_err(|e| e.to_string())?;
    let report = class_area_distribution(&clouds, &part, template.num_classes()).map_err(|e| e.to_string())?;
    let (hy, hya) = (report.marginal_entropy, report.conditional_entropy);
    ensure(template.num_classes() >= 4 && beams.len() == 8, || "template too small".into())?;
    ensure(hya < hy - 0.1, || format!("H(Y|A) {hya:.4} not below H(Y) {hy:.4} - 0.1"))?;
    let elapsed = start.elapsed();
    within(elapsed, 60)?;
    Ok(format!("H(Y) {hy:.4} nat, H(Y|A) {hya:.4} nat over 8 areas ({elapsed:.1?})"))
}

// ---- SSL uplift ----

fn ssl_uplift() -> Outcome {
    let start = Instant::now();
    let template = SceneSpec::default_template();
    let classes = template.num_classes();
    let cameras = synth::surround_cameras(64, 32).map_err(|e| e.to_string())?;
    let protos = synth::one_hot_prototypes(classes);
    let train = synth::make_painted_benchmark(&template, 200, 1000, &cameras, &protos, 0.3).map_err(|e| e.to_string())?;
    let val = synth::make_painted_benchmark(&template, 50, 5000, &cameras, &protos, 0.3).map_err(|e| e.to_string())?;
    let table = Array2::from_shape_fn((classes, classes), |(r, c)| f64::from(protos[r][c]));
    let scores = PrototypeScores::new(table).map_err(|e| e.to_string())?;
    let data = TrainData { train: &train, val: &val, num_classes: classes, scores: Some(&scores) };

    let strategies = [TrainStrategy::SupOnly, TrainStrategy::LaserMix, TrainStrategy::LaserMixPp];
    let mut sums = [0.0; 3];
    for seed in 0..5 {
        for (k, strategy) in strategies.iter().enumerate() {
            let config = TrainConfig { strategy: *strategy, seed, ..TrainConfig::default() };
            let outcome = run_semi_supervised(&config, &data).map_err(|e| format!("{strategy}: {e}"))?;
            sums[k] += outcome.metrics.expect("val set given").miou * 100.0;
        }
    }
    let [sup, lm, pp] = sums.map(|s| s / 5.0);
    let elapsed = start.elapsed();
    let summary = format!(
        "mIoU over 5 seeds: SUP_ONLY {sup:.2}, LASERMIX {lm:.2} ({:+.2}, need >= +2.00), LASERMIX_PP {pp:.2} ({:+.2} vs LASERMIX, need >= -0.50) ({elapsed:.1?})",
        lm - sup,
        pp - lm
    );
    within(elapsed, 600).map_err(|e| format!("{summary}; {e}"))?;
    ensure(lm - sup >= 2.0 && pp - lm >= -0.5, || summary.clone())?;
    Ok(summary)
}

// ---- determinism ----

fn lmk(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lmk"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("lmk {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn dir_bytes(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    Ok(files)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let data = root.join("data");
    let s = |p: &Path| p.to_string_lossy().into_owned();
    lmk(&["synth", "--scenes", "8", "--seed", "3", "--out", &s(&data)])?;
    let config = "strategy = lasermix\nratio = 0.25\nepochs = 3\nwarmup = 1\nseed = 7\ntrain = data\nval = data\n";
    fs::write(root.join("train.cfg"), config).map_err(|e| e.to_string())?;

    let mut runs = Vec::new();
    for run in 0..2 {
        let out = root.join(format!("run{run}"));
        lmk(&[
            "train",
            &s(&root.join("train.cfg")),
            "--output",
            &s(&out.join("model.fmap")),
            "--log",
            &s(&out.join("log.csv")),
        ])?;
        for strategy in ["lasermix", "grid", "mixup", "cutmix"] {
            let mix = out.join(format!("mix_{strategy}"));
            let frame = |stem: &str, sub: &str, ext: &str| s(&data.join(sub).join(format!("{stem}.{ext}")));
            lmk(&[
                "mix",
                "--scan-a",
                &frame("000000", "velodyne", "bin"),
                "--labels-a",
                &frame("000000", "labels", "label"),
                "--scan-b",
                &frame("000001", "velodyne", "bin"),
                "--labels-b",
                &frame("000001", "labels", "label"),
                "--strategy",
                strategy,
                "--seed",
                "11",
                "--out",
                &s(&mix),
            ])?;
            runs.push((run, strategy.to_string(), dir_bytes(&mix)?));
        }
        runs.push((run, "train".into(), dir_bytes(&out)?));
    }
    let (first, second) = runs.split_at(runs.len() / 2);
    let mut files = 0;
    for ((_, name, a), (_, _, b)) in first.iter().zip(second) {
        ensure(a == b, || format!("`{name}` outputs differ between runs"))?;
        files += a.len();
    }
    Ok(format!("train and 4 mix strategies rerun bit-identically ({files} files)"))
}

// ---- I/O ----

fn hex(s: &str) -> Vec<u8> {
    (0..s.len()).step_by(2).map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap()).collect()
}

fn offset_of(r: lasermix::Result<impl Sized>) -> Option<u64> {
    match r {
        Err(Error::Format { offset, .. }) => Some(offset),
        _ => None,
    }
}

fn io_round_trips() -> Outcome {
    let scan = hex("0000803f00000040000040400000003f000080bf000000000000803e0000803f");
    let cloud = io::decode_scan(&scan).map_err(|e| e.to_string())?;
    ensure(cloud.coords() == [[1.0, 2.0, 3.0], [-1.0, 0.0, 0.25]] && cloud.intensity() == [0.5, 1.0], || {
        format!("scan fixture decoded to {:?}", cloud.coords())
    })?;
    ensure(io::encode_scan(&cloud) == scan, || "scan fixture did not round-trip".into())?;
    ensure(io::encode_scan(&io::decode_scan(&[]).unwrap()).is_empty(), || "empty scan".into())?;

    let labels = hex("0100020009000000");
    let (sem, inst) = io::decode_labels(&labels, 2).map_err(|e| e.to_string())?;
    ensure(sem == [1, 9] && inst == [2, 0], || format!("labels decoded to {sem:?} {inst:?}"))?;
    ensure(io::encode_labels(&sem, Some(&inst)) == labels, || "label fixture did not round-trip".into())?;

    let fmap = hex("464d4150020000000100000001000000000000bf0000c03f");
    let image = io::decode_fmap(&fmap).map_err(|e| e.to_string())?;
    ensure(image.data() == [-0.5, 1.5], || format!("FMAP fixture decoded to {:?}", image.data()))?;
    ensure(io::encode_fmap(&image) == fmap, || "FMAP fixture did not round-trip".into())?;

    let mut nan = scan.clone();
    nan[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
    let mut bad_magic = fmap.clone();
    bad_magic[0] = b'X';
    let rejected = [
        ("17-byte scan", offset_of(io::decode_scan(&[0; 17])), 16),
        ("NaN in scan", offset_of(io::decode_scan(&nan)), 20),
        ("partial label record", offset_of(io::decode_labels(&labels[..6], 2)), 4),
        ("label count mismatch", offset_of(io::decode_labels(&labels[..4], 2)), 4),
        ("FMAP bad magic", offset_of(io::decode_fmap(&bad_magic)), 0),
        ("FMAP truncated payload", offset_of(io::decode_fmap(&fmap[..22])), 22),
        ("FMAP short header", offset_of(io::decode_fmap(&fmap[..9])), 9),
    ];
    for (name, got, want) in rejected {
        ensure(got == Some(want), || format!("{name}: offset {got:?}, expected {want}"))?;
    }
    Ok("scan, label and FMAP fixtures byte-exact; 7 malformed inputs rejected at the right offsets".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, bool); 10] = [
        ("conservation & involution", conservation, true),
        ("partition oracle", partition_oracle, true),
        ("projection contract", projection, true),
        ("entropy suite", entropy_suite, true),
        ("gradient suite", gradient_suite, true),
        ("EMA exactness", ema_exactness, true),
        ("spatial prior", spatial_prior, true),
        ("SSL uplift", ssl_uplift, std::env::var_os("LMK_ACCEPTANCE_STRICT").is_some()),
        ("determinism", determinism, true),
        ("I/O round trips", io_round_trips, true),
    ];
    let mut passed = 0;
    let mut fatal = 0;
    for (name, run, hard) in criteria {
        match run() {
            Ok(detail) => {
                passed += 1;
                println!("PASS {name}: {detail}");
            }
            Err(detail) => {
                fatal += usize::from(hard);
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {passed}/{} criteria passed", criteria.len());
    if fatal > 0 {
        std::process::exit(1);
    }
}
