//! Poisson resampling of count data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::Result;
use crate::model::CountsTable;

const BATCH: u64 = 1000;
const MIN_BATCHES: u64 = 5;
const MAX_RESAMPLES: u64 = 10_000_000;

/// Data whose counts can be redrawn one by one.
pub trait Resample: Sized {
    fn resample(&self, draw: &mut dyn FnMut(u64) -> u64) -> Self;
}

impl Resample for u64 {
    fn resample(&self, draw: &mut dyn FnMut(u64) -> u64) -> Self {
        draw(*self)
    }
}

impl Resample for CountsTable {
    /// Redraws every count; the repetition number is kept.
    fn resample(&self, draw: &mut dyn FnMut(u64) -> u64) -> Self {
        self.map_counts(draw)
    }
}

impl<T: Resample> Resample for Vec<T> {
    fn resample(&self, draw: &mut dyn FnMut(u64) -> u64) -> Self {
        self.iter().map(|t| t.resample(draw)).collect()
    }
}

impl<T: Resample, const N: usize> Resample for [T; N] {
    fn resample(&self, draw: &mut dyn FnMut(u64) -> u64) -> Self {
        std::array::from_fn(|i| self[i].resample(draw))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapResult {
    pub mean: f64,
    pub std: f64,
    /// Resamples on which the statistic was defined.
    pub resamples: u64,
    /// Resamples discarded because the statistic was undefined.
    pub discarded: u64,
    /// Whether the relative-change criterion was met before the resample cap.
    pub converged: bool,
}

impl BootstrapResult {
    pub fn discard_rate(&self) -> f64 {
        let total = self.resamples + self.discarded;
        if total == 0 {
            0.0
        } else {
            self.discarded as f64 / total as f64
        }
    }

    /// More than 1 % of resamples were discarded.
    pub fn high_discard_rate(&self) -> bool {
        self.discard_rate() > 0.01
    }
}

fn poisson(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    if n == 0 {
        return 0;
    }
    Poisson::new(n as f64).expect("positive mean").sample(rng) as u64
}

/// Mean and standard deviation of `statistic` over Poisson resamples of
/// `data`, each count `n` replaced by a draw from Poisson(n).
///
/// Resamples are added in batches of 1000 until both the mean and the
/// standard deviation change by less than `rel_tol` (relative) between
/// batches. Resample `i` uses its own ChaCha stream, so results depend only
/// on `seed`.
pub fn poisson_bootstrap<T, F>(data: &T, statistic: F, rel_tol: f64, seed: u64) -> BootstrapResult
where
    T: Resample + Sync,
    F: Fn(&T) -> Result<f64> + Sync,
{
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut n = 0u64;
    let mut discarded = 0u64;
    let mut prev: Option<(f64, f64)> = None;
    let mut next_index = 0u64;
    let mut batches = 0u64;
    loop {
        let values: Vec<Option<f64>> = (next_index..next_index + BATCH)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i);
                let r = data.resample(&mut |c| poisson(&mut rng, c));
                statistic(&r).ok().filter(|v| v.is_finite())
            })
            .collect();
        next_index += BATCH;
        batches += 1;
        for v in values {
            match v {
                Some(v) => {
                    sum += v;
                    sum_sq += v * v;
                    n += 1;
                }
                None => discarded += 1,
            }
        }
        let (mean, std) = if n > 1 {
            let mean = sum / n as f64;
            let var = (sum_sq - n as f64 * mean * mean) / (n - 1) as f64;
            (mean, var.max(0.0).sqrt())
        } else {
            (sum, 0.0)
        };
        let close = |a: f64, b: f64| (a - b).abs() <= rel_tol * b.abs().max(f64::MIN_POSITIVE);
        let done = prev.is_some_and(|(m, s)| close(m, mean) && (close(s, std) || std == 0.0 && s == 0.0));
        if (done && batches >= MIN_BATCHES) || next_index >= MAX_RESAMPLES {
            return BootstrapResult {
                mean,
                std,
                resamples: n,
                discarded,
                converged: done,
            };
        }
        prev = Some((mean, std));
    }
}
