use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use lasermix::camera::{paint_points, project_points};
use lasermix::geometry::{inclination, make_inclination_partition, BeamPartition, GridPartition};
use lasermix::io;
use lasermix::mixing::{self, Aabb, MixOutput, Parity, Source};
use lasermix::priors::{class_area_distribution, prior_heatmap};
use lasermix::ssl::{evaluate, run_semi_supervised, PrototypeScores, TrainConfig, TrainData};
use lasermix::synth::{self, SceneSpec};
use lasermix::{PointCloud, IGNORE_LABEL};

/// Bad flag combinations; reported with exit code 2 like clap's own errors.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "lmk", version, about = "LiDAR mixing, spatial priors and semi-supervised training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mix two scans and write the results with a provenance table.
    Mix(MixArgs),
    /// Class/area statistics and prior heatmaps of a labeled dataset.
    Stats(StatsArgs),
    /// Project a scan into a camera image and paint it.
    Project(ProjectArgs),
    /// Generate a synthetic labeled dataset from a scene template.
    Synth(SynthArgs),
    /// Train from a config file and write the teacher weights.
    Train(TrainArgs),
    /// Per-class IoU of a weights file on a labeled dataset.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MixStrategy {
    Lasermix,
    Grid,
    Mixup,
    Cutmix,
    Cutout,
    Concat,
}

#[derive(clap::Args)]
struct MixArgs {
    #[arg(long)]
    scan_a: PathBuf,
    #[arg(long)]
    labels_a: Option<PathBuf>,
    #[arg(long)]
    scan_b: Option<PathBuf>,
    #[arg(long)]
    labels_b: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "lasermix")]
    strategy: MixStrategy,
    /// Inclination areas.
    #[arg(long, default_value_t = 4)]
    areas: usize,
    /// Azimuth sectors for `grid`.
    #[arg(long, default_value_t = 2)]
    sectors: usize,
    /// Share of points sent to the first output by `mixup`.
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
    /// Side length range of the random `cutmix` box, meters.
    #[arg(long, default_value_t = 2.0)]
    box_min: f64,
    #[arg(long, default_value_t = 10.0)]
    box_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Lower inclination bound in degrees; defaults to the lowest point.
    #[arg(long, allow_hyphen_values = true)]
    fov_down: Option<f64>,
    /// Upper inclination bound in degrees; defaults to the highest point.
    #[arg(long, allow_hyphen_values = true)]
    fov_up: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct StatsArgs {
    dataset: PathBuf,
    #[arg(long, default_value_t = 8)]
    areas: usize,
    /// Class count; defaults to `classes.txt` or the largest label + 1.
    #[arg(long)]
    classes: Option<usize>,
    /// Azimuth columns of the heatmaps.
    #[arg(long, default_value_t = 360)]
    width: usize,
    #[arg(long, allow_hyphen_values = true)]
    fov_down: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    fov_up: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ProjectArgs {
    #[arg(long)]
    scan: PathBuf,
    /// KITTI calibration text with `P2` and `Tr`.
    #[arg(long)]
    calib: PathBuf,
    /// PPM (P6) or FMAP image.
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct SynthArgs {
    /// Scene template; the built-in street corner when omitted.
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    scenes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also render four cameras and paint every scan.
    #[arg(long)]
    painted: bool,
    #[arg(long, default_value_t = 64)]
    camera_width: usize,
    #[arg(long, default_value_t = 32)]
    camera_height: usize,
    /// Std of the noise added to the rendered image features.
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct TrainArgs {
    config: PathBuf,
    /// Overrides `output` from the config.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides `log` from the config.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Class count; defaults to `classes.txt` of the train set or the largest label + 1.
    #[arg(long)]
    classes: Option<usize>,
}

#[derive(clap::Args)]
struct EvalArgs {
    dataset: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Mix(a) => cmd_mix(&a),
        Command::Stats(a) => cmd_stats(&a),
        Command::Project(a) => cmd_project(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.downcast_ref::<Usage>().is_some() { 2 } else { 1 })
        }
    }
}

/// `LMK_THREADS` caps the rayon pool; 0 or unset means one thread per core.
fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("LMK_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| usage(format!("LMK_THREADS must be a number, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn partition_for(clouds: &[&PointCloud], areas: usize, down: Option<f64>, up: Option<f64>) -> Result<BeamPartition> {
    if areas == 0 {
        return Err(usage("--areas must be at least 1"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    if down.is_none() || up.is_none() {
        for p in clouds.iter().flat_map(|c| c.coords()) {
            if let Ok(phi) = inclination(*p) {
                lo = lo.min(phi);
                hi = hi.max(phi);
            }
        }
    }
    let lo = down.map_or(lo, f64::to_radians);
    let hi = up.map_or(hi, f64::to_radians);
    if !(lo < hi) {
        bail!("cannot derive an inclination range from the scans; pass --fov-down and --fov-up");
    }
    Ok(make_inclination_partition(lo, hi, areas)?)
}

fn write_mixed(out: &Path, name: &str, cloud: &PointCloud) -> Result<()> {
    io::write_scan(
        cloud,
        &out.join(format!("{name}.bin")),
        Some(&out.join(format!("{name}.label"))),
    )?;
    Ok(())
}

fn provenance_csv(mix: &MixOutput) -> String {
    let mut csv = String::from("output,position,source,index\n");
    for (name, prov) in [("mixed_a", &mix.provenance_a), ("mixed_b", &mix.provenance_b)] {
        for (pos, p) in prov.iter().enumerate() {
            let src = match p.source {
                Source::ScanA => "a",
                Source::ScanB => "b",
            };
            let _ = writeln!(csv, "{name},{pos},{src},{}", p.index);
        }
    }
    csv
}

fn cmd_mix(args: &MixArgs) -> Result<()> {
    let a = io::read_scan(&args.scan_a, args.labels_a.as_deref())?;
    let needs_b = !matches!(args.strategy, MixStrategy::Cutout);
    let b = match (&args.scan_b, needs_b) {
        (Some(path), _) => Some(io::read_scan(path, args.labels_b.as_deref())?),
        (None, true) => return Err(usage("this strategy needs --scan-b")),
        (None, false) => None,
    };
    if args.labels_a.is_some() != args.labels_b.is_some() && b.is_some() {
        return Err(usage("give labels for both scans or for neither"));
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let clouds: Vec<&PointCloud> = std::iter::once(&a).chain(b.as_ref()).collect();
    let mix = match args.strategy {
        MixStrategy::Lasermix => {
            let part = partition_for(&clouds, args.areas, args.fov_down, args.fov_up)?;
            mixing::laser_mix(&a, b.as_ref().expect("checked"), &part)?
        }
        MixStrategy::Grid => {
            let part = partition_for(&clouds, args.areas, args.fov_down, args.fov_up)?;
            if args.sectors == 0 {
                return Err(usage("--sectors must be at least 1"));
            }
            let grid = GridPartition::new(part, args.sectors)?;
            mixing::grid_mix(&a, b.as_ref().expect("checked"), &grid)?
        }
        MixStrategy::Mixup => {
            if !(0.0..=1.0).contains(&args.ratio) {
                return Err(usage("--ratio must lie in [0, 1]"));
            }
            mixing::point_mixup(&a, b.as_ref().expect("checked"), args.ratio, args.seed)?
        }
        MixStrategy::Cutmix => {
            let b = b.as_ref().expect("checked");
            let scene = Aabb::bounding(&[&a, b]).context("both scans are empty")?;
            let region = mixing::random_box(&scene, args.box_min, args.box_max, args.seed)
                .map_err(|e| usage(e.to_string()))?;
            mixing::cutmix_area(&a, b, &region)?
        }
        MixStrategy::Cutout => {
            let part = partition_for(&clouds, args.areas, args.fov_down, args.fov_up)?;
            let kept = mixing::cutout_area(&a, &part, Parity::Odd);
            write_mixed(&args.out, "mixed_a", &kept)?;
            println!("kept {} of {} points", kept.len(), a.len());
            return Ok(());
        }
        MixStrategy::Concat => {
            let joined = mixing::scene_concat(&a, b.as_ref().expect("checked"))?;
            write_mixed(&args.out, "mixed_a", &joined)?;
            println!("joined {} points", joined.len());
            return Ok(());
        }
    };
    write_mixed(&args.out, "mixed_a", &mix.mixed_a)?;
    write_mixed(&args.out, "mixed_b", &mix.mixed_b)?;
    io::write_bytes(&args.out.join("provenance.csv"), provenance_csv(&mix).as_bytes())?;
    println!("mixed_a {} points, mixed_b {} points", mix.mixed_a.len(), mix.mixed_b.len());
    Ok(())
}

/// Frames of a dataset directory, read in parallel, in stem order.
fn load_dataset(dir: &Path) -> Result<io::Dataset> {
    let names = io::list_stems(dir, "velodyne", "bin")?;
    let clouds = names
        .par_iter()
        .map(|s| io::read_frame(dir, s))
        .collect::<lasermix::Result<Vec<_>>>()?;
    Ok(io::Dataset { names, clouds })
}

fn class_names(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join("classes.txt"))
        .map(|t| t.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
        .unwrap_or_default()
}

fn class_count(explicit: Option<usize>, names: &[String], clouds: &[PointCloud]) -> Result<usize> {
    if let Some(c) = explicit {
        return Ok(c);
    }
    if !names.is_empty() {
        return Ok(names.len());
    }
    let max = clouds
        .iter()
        .filter_map(PointCloud::labels)
        .flatten()
        .filter(|&&l| l != IGNORE_LABEL)
        .max()
        .context("dataset has no labeled points")?;
    Ok(usize::from(*max) + 1)
}

fn cmd_stats(args: &StatsArgs) -> Result<()> {
    let data = load_dataset(&args.dataset)?;
    let names = class_names(&args.dataset);
    let classes = class_count(args.classes, &names, &data.clouds)?;
    let refs: Vec<&PointCloud> = data.clouds.iter().collect();
    let part = partition_for(&refs, args.areas, args.fov_down, args.fov_up)?;
    let report = class_area_distribution(&data.clouds, &part, classes)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    io::write_bytes(&args.out.join("prior.csv"), report.to_csv(&names).as_bytes())?;
    for c in 0..classes {
        let map = prior_heatmap(&data.clouds, &part, c as u16, args.width, classes)?;
        let name = names.get(c).cloned().unwrap_or_else(|| format!("class_{c}"));
        io::write_bytes(&args.out.join(format!("heatmap_{name}.pgm")), &map.to_pgm())?;
    }
    let summary = format!(
        "scans={} areas={} H(Y)={:.6} H(Y|A)={:.6}\n",
        data.clouds.len(),
        args.areas,
        report.marginal_entropy,
        report.conditional_entropy
    );
    io::write_bytes(&args.out.join("entropy.txt"), summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}

fn cmd_project(args: &ProjectArgs) -> Result<()> {
    let cloud = io::read_scan(&args.scan, None)?;
    let image = io::read_image(&args.image)?;
    let text = fs::read_to_string(&args.calib).with_context(|| format!("reading {}", args.calib.display()))?;
    let calib = io::parse_kitti_calib(&text, (image.width(), image.height()))?;
    let corr = project_points(&cloud, &calib);
    let painted = paint_points(&cloud, &image, &corr)?;
    let mut csv = String::from("index,u,v,depth,valid\n");
    for i in 0..cloud.len() {
        let [u, v] = corr.pixels[i];
        let _ = writeln!(csv, "{i},{u:.6},{v:.6},{:.6},{}", corr.depth[i], u8::from(corr.mask[i]));
    }
    io::write_bytes(&args.out.join("correspondence.csv"), csv.as_bytes())?;
    io::write_bytes(
        &args.out.join("painted.fmap"),
        &io::encode_painted(painted.painted().expect("just painted")),
    )?;
    println!("{} of {} points inside the image", corr.valid_count(), cloud.len());
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = match &args.template {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SceneSpec::parse(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SceneSpec::default_template(),
    };
    let classes = spec.num_classes();
    let (prototypes, cameras) = if args.painted {
        let cams = synth::surround_cameras(args.camera_width, args.camera_height).map_err(|e| usage(e.to_string()))?;
        (synth::one_hot_prototypes(classes), cams)
    } else {
        (Vec::new(), Vec::new())
    };
    let stems: Vec<String> = (0..args.scenes).map(|i| format!("{i:06}")).collect();
    stems
        .par_iter()
        .enumerate()
        .try_for_each(|(i, stem)| -> Result<()> {
            let scene = synth::perturb_scene(&spec, args.seed.wrapping_add(i as u64));
            let mut cloud = synth::simulate_scan(&scene)?;
            if args.painted {
                cloud = synth::paint_scan(&scene, &cloud, &cameras, &prototypes, args.noise)?;
            }
            io::write_frame(&args.out, stem, &cloud)?;
            Ok(())
        })?;
    let mut names: Vec<String> = spec.class_names.clone();
    names.resize_with(classes, String::new);
    for (c, n) in names.iter_mut().enumerate() {
        if n.is_empty() {
            *n = format!("class_{c}");
        }
    }
    io::write_bytes(&args.out.join("classes.txt"), (names.join("\n") + "\n").as_bytes())?;
    if args.painted {
        let rows: Vec<String> = prototypes
            .iter()
            .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "))
            .collect();
        io::write_bytes(&args.out.join("prototypes.txt"), (rows.join("\n") + "\n").as_bytes())?;
    }
    println!("wrote {} scenes to {}", args.scenes, args.out.display());
    Ok(())
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let config = TrainConfig::parse(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let train_dir = config
        .paths
        .train
        .as_ref()
        .map(|p| resolve(base, p))
        .ok_or_else(|| usage("the config needs a `train` dataset directory"))?;
    let output = args
        .output
        .clone()
        .or_else(|| config.paths.output.as_ref().map(|p| resolve(base, p)))
        .ok_or_else(|| usage("no weights output: set `output` in the config or pass --output"))?;
    let log = args.log.clone().or_else(|| config.paths.log.as_ref().map(|p| resolve(base, p)));

    let train = load_dataset(&train_dir)?;
    let val = match &config.paths.val {
        Some(p) => load_dataset(&resolve(base, p))?.clouds,
        None => Vec::new(),
    };
    let scores = match &config.paths.prototypes {
        Some(p) => {
            let path = resolve(base, p);
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            Some(PrototypeScores::new(io::parse_prototypes(&text)?)?)
        }
        None => None,
    };
    let names = class_names(&train_dir);
    let classes = class_count(args.classes, &names, &train.clouds)?;
    let data = TrainData {
        train: &train.clouds,
        val: &val,
        num_classes: classes,
        scores: scores.as_ref().map(|s| s as &dyn lasermix::ssl::TextScoreProvider),
    };
    let outcome = run_semi_supervised(&config, &data)?;

    io::write_bytes(&output, &io::encode_weights(&outcome.teacher))?;
    if let Some(log) = log {
        let mut csv = String::from(lasermix::ssl::LossReport::CSV_HEADER);
        csv.push('\n');
        for (epoch, report) in outcome.history.iter().enumerate() {
            csv.push_str(&report.csv_row(epoch));
            csv.push('\n');
        }
        io::write_bytes(&log, csv.as_bytes())?;
    }
    println!(
        "{} epochs, {} labeled / {} unlabeled scans",
        outcome.history.len(),
        outcome.plan.labeled.len(),
        outcome.plan.unlabeled.len()
    );
    if let Some(m) = &outcome.metrics {
        println!("val mIoU {:.4} mAcc {:.4}", m.miou, m.macc);
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let model = io::decode_weights(&io::read_bytes(&args.weights)?)?;
    let data = load_dataset(&args.dataset)?;
    let report = evaluate(&model, &data.clouds)?;
    let csv = report.to_csv(&class_names(&args.dataset));
    if let Some(out) = &args.out {
        io::write_bytes(out, csv.as_bytes())?;
    }
    print!("{csv}");
    println!("mIoU {:.4}", report.miou);
    Ok(())
}
