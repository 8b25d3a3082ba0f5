//! Pairs (case) bootstrap.
//!
//! Replicate `b` draws its resample from a ChaCha8 stream keyed by
//! `(seed, b)`, so results do not depend on how replicates are scheduled:
//! parallel and sequential execution give bit-identical output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{HetdiagError, Result};

pub const DEFAULT_REPS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon thread pool when built with the `parallel` feature, otherwise
    /// identical to `Sequential`.
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapResult {
    /// Statistic on the original sample.
    pub estimate: Vec<f64>,
    /// Standard deviation across successful replicates.
    pub se: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    /// One row per successful replicate, in replicate order.
    pub replicates: Vec<Vec<f64>>,
    pub n_failed: usize,
}

impl BootstrapResult {
    /// `estimate[j] -/+ z * se[j]`.
    pub fn normal_interval(&self, j: usize, z: f64) -> (f64, f64) {
        (
            self.estimate[j] - z * self.se[j],
            self.estimate[j] + z * self.se[j],
        )
    }
}

/// Row indices of replicate `index`.
pub fn resample_indices(n: usize, seed: u64, index: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn replicate<F>(statistic: &F, ds: &Dataset, seed: u64, index: usize) -> Result<Option<Vec<f64>>>
where
    F: Fn(&Dataset) -> Result<Vec<f64>>,
{
    let rows = resample_indices(ds.n(), seed, index);
    let sample = match ds.select_rows(&rows) {
        Ok(s) => s,
        Err(e) if e.is_degenerate() || matches!(e, HetdiagError::Schema(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    match statistic(&sample) {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_degenerate() => Ok(None),
        Err(e) => Err(e),
    }
}

#[cfg(feature = "parallel")]
fn run_parallel<F>(
    statistic: &F,
    ds: &Dataset,
    reps: usize,
    seed: u64,
) -> Result<Vec<Option<Vec<f64>>>>
where
    F: Fn(&Dataset) -> Result<Vec<f64>> + Sync,
{
    use rayon::prelude::*;
    (0..reps)
        .into_par_iter()
        .map(|b| replicate(statistic, ds, seed, b))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run_parallel<F>(
    statistic: &F,
    ds: &Dataset,
    reps: usize,
    seed: u64,
) -> Result<Vec<Option<Vec<f64>>>>
where
    F: Fn(&Dataset) -> Result<Vec<f64>> + Sync,
{
    run_sequential(statistic, ds, reps, seed)
}

fn run_sequential<F>(
    statistic: &F,
    ds: &Dataset,
    reps: usize,
    seed: u64,
) -> Result<Vec<Option<Vec<f64>>>>
where
    F: Fn(&Dataset) -> Result<Vec<f64>>,
{
    (0..reps)
        .map(|b| replicate(statistic, ds, seed, b))
        .collect()
}

pub fn pairs_bootstrap<F>(
    statistic: F,
    ds: &Dataset,
    reps: usize,
    seed: u64,
) -> Result<BootstrapResult>
where
    F: Fn(&Dataset) -> Result<Vec<f64>> + Sync,
{
    pairs_bootstrap_with(statistic, ds, reps, seed, Execution::default())
}

pub fn pairs_bootstrap_with<F>(
    statistic: F,
    ds: &Dataset,
    reps: usize,
    seed: u64,
    exec: Execution,
) -> Result<BootstrapResult>
where
    F: Fn(&Dataset) -> Result<Vec<f64>> + Sync,
{
    if reps < 2 {
        return Err(HetdiagError::BadConfig(format!(
            "bootstrap needs at least 2 replicates, got {reps}"
        )));
    }
    let estimate = statistic(ds)?;
    let draws = match exec {
        Execution::Sequential => run_sequential(&statistic, ds, reps, seed)?,
        Execution::Parallel => run_parallel(&statistic, ds, reps, seed)?,
    };
    let replicates: Vec<Vec<f64>> = draws.into_iter().flatten().collect();
    let n_failed = reps - replicates.len();
    if n_failed * 2 > reps || replicates.len() < 2 {
        return Err(HetdiagError::TooManyFailures {
            failed: n_failed,
            reps,
        });
    }
    if let Some(bad) = replicates.iter().find(|r| r.len() != estimate.len()) {
        return Err(HetdiagError::Dimension(format!(
            "statistic returned {} values on a replicate but {} on the sample",
            bad.len(),
            estimate.len()
        )));
    }
    let se = column_sd(&replicates, estimate.len());
    Ok(BootstrapResult {
        estimate,
        se,
        reps,
        seed,
        replicates,
        n_failed,
    })
}

fn column_sd(rows: &[Vec<f64>], width: usize) -> Vec<f64> {
    let m = rows.len() as f64;
    (0..width)
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / m;
            let ss: f64 = rows.iter().map(|r| (r[j] - mean).powi(2)).sum();
            (ss / (m - 1.0)).sqrt()
        })
        .collect()
}
