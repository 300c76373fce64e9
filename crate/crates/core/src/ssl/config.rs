//! Flat `key = value` training configuration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::losses::LossWeights;
use super::split::SplitStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainStrategy {
    /// Supervised loss plus LaserMix on (labeled, unlabeled) pairs and the mean-teacher term.
    LaserMix,
    /// LaserMix with painted channels, camera distillation and language guidance.
    LaserMixPp,
    SupOnly,
    MeanTeacherOnly,
    /// Mixes two unlabeled scans instead of a labeled with an unlabeled one.
    MixUnlabeledOnly,
}

impl TrainStrategy {
    pub fn uses_unlabeled(self) -> bool {
        self != Self::SupOnly
    }

    pub fn mixes(self) -> bool {
        matches!(self, Self::LaserMix | Self::LaserMixPp | Self::MixUnlabeledOnly)
    }

    pub fn multi_modal(self) -> bool {
        self == Self::LaserMixPp
    }
}

impl FromStr for TrainStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "LASERMIX" => Ok(Self::LaserMix),
            "LASERMIX_PP" | "LASERMIX++" => Ok(Self::LaserMixPp),
            "SUP_ONLY" => Ok(Self::SupOnly),
            "MEAN_TEACHER_ONLY" => Ok(Self::MeanTeacherOnly),
            "MIX_UNLABELED_ONLY" => Ok(Self::MixUnlabeledOnly),
            _ => Err(Error::InvalidArgument(format!("unknown training strategy `{s}`"))),
        }
    }
}

impl fmt::Display for TrainStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::LaserMix => "LASERMIX",
            Self::LaserMixPp => "LASERMIX_PP",
            Self::SupOnly => "SUP_ONLY",
            Self::MeanTeacherOnly => "MEAN_TEACHER_ONLY",
            Self::MixUnlabeledOnly => "MIX_UNLABELED_ONLY",
        })
    }
}

/// Optional file locations carried by a config file. Relative paths are
/// kept as written; callers resolve them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub prototypes: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub ratio: f64,
    pub split: SplitStrategy,
    pub strategy: TrainStrategy,
    pub m_min: usize,
    pub m_max: usize,
    pub threshold: f64,
    pub ema: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub weights: LossWeights,
    /// Std of the initial Gaussian weights.
    pub init_std: f64,
    /// Gradient norm cap per step; 0 disables clipping.
    pub clip: f64,
    /// Leading epochs trained on the supervised loss alone. The teacher is
    /// reset to the student when they end.
    pub warmup: usize,
    pub paths: DataPaths,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ratio: 0.05,
            split: SplitStrategy::Uniform,
            strategy: TrainStrategy::LaserMix,
            m_min: 2,
            m_max: 6,
            threshold: 0.9,
            ema: 0.99,
            lr: 1.0,
            epochs: 25,
            seed: 0,
            weights: LossWeights::default(),
            init_std: 0.01,
            clip: 0.5,
            warmup: 15,
            paths: DataPaths::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return bad(format!("ratio {} outside (0, 1]", self.ratio));
        }
        if self.m_min == 0 || self.m_min > self.m_max {
            return bad(format!("area range {}..={} is empty or starts at 0", self.m_min, self.m_max));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        if !(0.0..1.0).contains(&self.ema) {
            return bad(format!("ema {} outside [0, 1)", self.ema));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if !(self.clip >= 0.0 && self.clip.is_finite()) {
            return bad(format!("clip {} must be nonnegative", self.clip));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return bad(format!("init_std {} must be nonnegative", self.init_std));
        }
        self.weights.validate()
    }

    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep
    /// their defaults. Errors carry the byte offset of the offending line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut offset = 0u64;
        for raw in text.split_inclusive('\n') {
            let line_offset = offset;
            offset += raw.len() as u64;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::format(line_offset, msg);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("`{key}` needs a number, got `{v}`")));
            let int = |v: &str| v.parse::<u64>().map_err(|_| err(format!("`{key}` needs an integer, got `{v}`")));
            let path = |v: &str| Some(PathBuf::from(v));
            match key {
                "ratio" => cfg.ratio = num(value)?,
                "split" => cfg.split = value.parse().map_err(|e: Error| err(e.to_string()))?,
                "strategy" => cfg.strategy = value.parse().map_err(|e: Error| err(e.to_string()))?,
                "m_min" => cfg.m_min = int(value)? as usize,
                "m_max" => cfg.m_max = int(value)? as usize,
                "threshold" => cfg.threshold = num(value)?,
                "ema" => cfg.ema = num(value)?,
                "lr" => cfg.lr = num(value)?,
                "epochs" => cfg.epochs = int(value)? as usize,
                "seed" => cfg.seed = int(value)?,
                "init_std" => cfg.init_std = num(value)?,
                "clip" => cfg.clip = num(value)?,
                "warmup" => cfg.warmup = int(value)? as usize,
                "weight.mix" => cfg.weights.mix = num(value)?,
                "weight.mt" => cfg.weights.mt = num(value)?,
                "weight.c2l" => cfg.weights.c2l = num(value)?,
                "weight.lkg" => cfg.weights.lkg = num(value)?,
                "train" => cfg.paths.train = path(value),
                "val" => cfg.paths.val = path(value),
                "prototypes" => cfg.paths.prototypes = path(value),
                "output" => cfg.paths.output = path(value),
                "log" => cfg.paths.log = path(value),
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        Ok(cfg)
    }

    /// Inverse of [`TrainConfig::parse`] for every key.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "ratio = {}\nsplit = {}\nstrategy = {}\nm_min = {}\nm_max = {}\nthreshold = {}\nema = {}\nlr = {}\n\
             epochs = {}\nseed = {}\ninit_std = {}\nclip = {}\nwarmup = {}\nweight.mix = {}\nweight.mt = {}\nweight.c2l = {}\nweight.lkg = {}\n",
            self.ratio,
            self.split,
            self.strategy,
            self.m_min,
            self.m_max,
            self.threshold,
            self.ema,
            self.lr,
            self.epochs,
            self.seed,
            self.init_std,
            self.clip,
            self.warmup,
            self.weights.mix,
            self.weights.mt,
            self.weights.c2l,
            self.weights.lkg,
        );
        let p = &self.paths;
        for (key, value) in [
            ("train", &p.train),
            ("val", &p.val),
            ("prototypes", &p.prototypes),
            ("output", &p.output),
            ("log", &p.log),
        ] {
            if let Some(v) = value {
                out.push_str(&format!("{key} = {}\n", v.display()));
            }
        }
        out
    }
}
