use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::eval::Counts;
use crate::error::{Error, Result};

pub const BOOTSTRAP_RESAMPLES: usize = 5000;

/// Pooled Δ (pp) of a multiset of pieces.
pub fn pooled_delta_pp<'a>(pieces: impl IntoIterator<Item = &'a Counts>) -> f64 {
    let mut total = Counts::default();
    for c in pieces {
        total.add(c);
    }
    total.delta_pp()
}

/// Lower one-sided 95% bound of Δ from a piece-level cluster bootstrap.
///
/// Each resample draws whole pieces with replacement and pools their notes.
/// Resample `b` uses its own stream of the seeded generator, so the result
/// does not depend on how resamples are scheduled. The bound is the empirical
/// 5th percentile, taken as the `ceil(0.05 B)`-th smallest value.
pub fn cluster_bootstrap(pieces: &[Counts], resamples: usize, seed: u64) -> Result<f64> {
    if pieces.is_empty() {
        return Err(Error::Empty("bootstrap needs at least one piece".into()));
    }
    if resamples == 0 {
        return Err(Error::Config("bootstrap needs at least one resample".into()));
    }
    let mut deltas: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            pooled_delta_pp((0..pieces.len()).map(|_| &pieces[rng.random_range(0..pieces.len())]))
        })
        .collect();
    deltas.sort_by(f64::total_cmp);
    Ok(deltas[lower_rank(resamples)])
}

/// Zero-based index of the 5th percentile among `n` sorted values.
pub fn lower_rank(n: usize) -> usize {
    ((0.05 * n as f64).ceil() as usize).max(1) - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TInterval {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
    pub half_width: f64,
    pub df: usize,
}

/// Two-sided 95% Student-t interval of the mean across seeds.
pub fn t_ci(values: &[f64]) -> Result<TInterval> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Validation(format!("t interval needs at least 2 values, got {n}")));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    let t = StudentsT::new(0.0, 1.0, df as f64)
        .map_err(|e| Error::Config(e.to_string()))?
        .inverse_cdf(0.975);
    let half_width = t * var.sqrt() / (n as f64).sqrt();
    Ok(TInterval {
        mean,
        low: mean - half_width,
        high: mean + half_width,
        half_width,
        df,
    })
}
