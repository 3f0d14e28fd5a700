//! Correlation, random binning and histogram helpers shared by the analyses.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("correlation undefined: a series has zero variance")]
    ZeroVariance,
    #[error("no data points")]
    Empty,
    #[error("bin size must be at least 1")]
    InvalidBinSize,
    #[error("histogram needs at least one bin")]
    InvalidBinCount,
    #[error("value {0} outside [0, 1]")]
    OutOfRange(f64),
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn is_constant(xs: &[f64]) -> bool {
    xs.iter().all(|x| *x == xs[0])
}

/// Sample Pearson correlation coefficient.
///
/// A constant series makes the coefficient undefined and is reported as
/// [`StatsError::ZeroVariance`] rather than 0.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(StatsError::TooFewPoints(xs.len()));
    }
    if is_constant(xs) || is_constant(ys) {
        return Err(StatsError::ZeroVariance);
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub mean_x: f64,
    pub mean_y: f64,
    pub count: usize,
}

/// Points averaged over random fixed-size subsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedSeries {
    pub bin_size: usize,
    pub seed: u64,
    pub bins: Vec<Bin>,
}

impl BinnedSeries {
    pub fn xs(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.mean_x).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.mean_y).collect()
    }

    pub fn pearson(&self) -> Result<f64, StatsError> {
        pearson(&self.xs(), &self.ys())
    }
}

pub const DEFAULT_BIN_SIZE: usize = 25;

/// Shuffles the pairs with a seeded RNG and averages consecutive chunks of
/// `bin_size`. Only the last bin may be smaller.
pub fn bin_random(pairs: &[(f64, f64)], bin_size: usize, seed: u64) -> Result<BinnedSeries, StatsError> {
    if bin_size == 0 {
        return Err(StatsError::InvalidBinSize);
    }
    if pairs.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let bins = order
        .chunks(bin_size)
        .map(|chunk| {
            let n = chunk.len() as f64;
            let (sx, sy) = chunk.iter().fold((0.0, 0.0), |(sx, sy), &i| (sx + pairs[i].0, sy + pairs[i].1));
            Bin { mean_x: sx / n, mean_y: sy / n, count: chunk.len() }
        })
        .collect();
    Ok(BinnedSeries { bin_size, seed, bins })
}

/// Histogram over `[0, 1]` plus the "at least x" cumulative curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// `(threshold, fraction of values >= threshold)` on a 0, 0.05, ..., 1 grid.
    pub cumulative_at_least: Vec<(f64, f64)>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Fraction of values at or above `threshold`, read off the 0.05 grid.
    pub fn at_least(&self, threshold: f64) -> Option<f64> {
        self.cumulative_at_least.iter().find(|(t, _)| (*t - threshold).abs() < 1e-12).map(|(_, f)| *f)
    }
}

pub const CUMULATIVE_STEPS: usize = 20;

/// Uniform bins over `[0, 1]`; every bin is `[lo, hi)` except the last, which
/// is closed on the right so a value of exactly 1 is counted.
pub fn histogram(values: &[f64], n_bins: usize) -> Result<Histogram, StatsError> {
    if n_bins == 0 {
        return Err(StatsError::InvalidBinCount);
    }
    if let Some(&bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(StatsError::OutOfRange(bad));
    }
    let edges: Vec<f64> = (0..=n_bins).map(|i| i as f64 / n_bins as f64).collect();
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        let b = ((v * n_bins as f64).floor() as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let n = values.len();
    let cumulative_at_least = (0..=CUMULATIVE_STEPS)
        .map(|i| {
            let t = i as f64 / CUMULATIVE_STEPS as f64;
            let frac = if n == 0 { 0.0 } else { values.iter().filter(|v| **v >= t).count() as f64 / n as f64 };
            (t, frac)
        })
        .collect();
    Ok(Histogram { edges, counts, cumulative_at_least })
}
