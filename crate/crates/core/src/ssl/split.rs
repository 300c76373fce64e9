//! Labeled/unlabeled frame selection.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitStrategy {
    Random,
    Uniform,
    Sequential,
}

impl FromStr for SplitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Self::Random),
            "uniform" => Ok(Self::Uniform),
            "sequential" => Ok(Self::Sequential),
            other => Err(Error::InvalidArgument(format!("unknown split strategy `{other}`"))),
        }
    }
}

impl fmt::Display for SplitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Random => "random",
            Self::Uniform => "uniform",
            Self::Sequential => "sequential",
        })
    }
}

/// Disjoint labeled/unlabeled index sets covering `0..total`, both ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub strategy: SplitStrategy,
    pub seed: u64,
}

impl SplitPlan {
    pub fn total(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }
}

/// Picks `k = max(1, round(ratio * total))` labeled frames.
pub fn split_frames(total: usize, ratio: f64, strategy: SplitStrategy, seed: u64) -> Result<SplitPlan> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!("labeled ratio {ratio} outside (0, 1]")));
    }
    if total == 0 {
        return Err(Error::InvalidArgument("cannot split zero frames".into()));
    }
    let k = ((ratio * total as f64).round() as usize).clamp(1, total);
    let mut labeled: Vec<usize> = match strategy {
        SplitStrategy::Sequential => (0..k).collect(),
        SplitStrategy::Uniform => (0..k).map(|i| i * total / k).collect(),
        SplitStrategy::Random => {
            let mut all: Vec<usize> = (0..total).collect();
            all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            all.truncate(k);
            all
        }
    };
    labeled.sort_unstable();
    let mut is_labeled = vec![false; total];
    for &i in &labeled {
        is_labeled[i] = true;
    }
    let unlabeled = (0..total).filter(|&i| !is_labeled[i]).collect();
    Ok(SplitPlan {
        labeled,
        unlabeled,
        strategy,
        seed,
    })
}
