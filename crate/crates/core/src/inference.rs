//! Nonparametric bootstrap over individuals: pointwise percentile bands for
//! one curve and for the paired difference of two curves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::driver::{Recipe, ThresholdGrid};
use crate::error::{DrError, Result};

/// Anything that maps a dataset to a curve on a fixed grid.
pub trait CurveEstimator: Sync {
    fn grid(&self) -> &ThresholdGrid;
    fn estimate(&self, data: &Dataset) -> Result<Vec<f64>>;
}

impl CurveEstimator for Recipe {
    fn grid(&self) -> &ThresholdGrid {
        &self.grid
    }

    fn estimate(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.evaluate(data).map(|c| c.values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandResult {
    pub grid: ThresholdGrid,
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    /// Successful replicates used for the percentiles.
    pub replicates: usize,
    pub requested: usize,
    /// Zero lies outside `[lower, upper]`.
    pub rejected: Vec<bool>,
}

impl BandResult {
    pub fn failed_replicates(&self) -> usize {
        self.requested - self.replicates
    }
}

/// Row indices of bootstrap replicate `r`, drawn uniformly with replacement.
///
/// Each replicate reads its own ChaCha stream of the master seed, so the draw
/// does not depend on execution order.
pub fn resample_indices(n: usize, seed: u64, replicate: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn check_args(b: usize, level: f64) -> Result<()> {
    if b < 2 {
        return Err(DrError::InvalidInput("B must be at least 2".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(DrError::InvalidInput(format!("level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

/// Lower and upper order statistics enclosing at least `level` of `sorted`.
///
/// Positions `(m − 1)α/2` and `(m − 1)(1 − α/2)` are rounded outward.
pub fn percentile_interval(sorted: &[f64], level: f64) -> (f64, f64) {
    let m = sorted.len();
    let alpha = 1.0 - level;
    let top = (m - 1) as f64;
    let lo = ((top * alpha / 2.0) + 1e-9).floor() as usize;
    let hi = ((top * (1.0 - alpha / 2.0)) - 1e-9).ceil() as usize;
    (sorted[lo.min(m - 1)], sorted[hi.min(m - 1)])
}

fn assemble(
    grid: &ThresholdGrid,
    point: Vec<f64>,
    replicates: Vec<Option<Vec<f64>>>,
    level: f64,
) -> Result<BandResult> {
    let requested = replicates.len();
    let ok: Vec<Vec<f64>> = replicates.into_iter().flatten().collect();
    if 2 * ok.len() < requested || ok.is_empty() {
        return Err(DrError::ReplicateFailure { succeeded: ok.len(), requested });
    }
    if ok.len() < requested {
        log::warn!("{} of {requested} bootstrap replicates failed and were dropped", requested - ok.len());
    }
    let g = point.len();
    let mut lower = Vec::with_capacity(g);
    let mut upper = Vec::with_capacity(g);
    let mut column = Vec::with_capacity(ok.len());
    for j in 0..g {
        column.clear();
        column.extend(ok.iter().map(|c| c[j]));
        column.sort_by(f64::total_cmp);
        let (lo, hi) = percentile_interval(&column, level);
        lower.push(lo);
        upper.push(hi);
    }
    let rejected = lower.iter().zip(&upper).map(|(&lo, &hi)| lo > 0.0 || hi < 0.0).collect();
    Ok(BandResult {
        grid: grid.clone(),
        point,
        lower,
        upper,
        level,
        replicates: ok.len(),
        requested,
        rejected,
    })
}

/// Pointwise percentile band for one curve.
pub fn bootstrap_bands<E: CurveEstimator + ?Sized>(
    data: &Dataset,
    estimator: &E,
    b: usize,
    level: f64,
    seed: u64,
) -> Result<BandResult> {
    check_args(b, level)?;
    let point = estimator.estimate(data)?;
    let n = data.n();
    let reps: Vec<Option<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|r| estimator.estimate(&data.resample(&resample_indices(n, seed, r))).ok())
        .collect();
    assemble(estimator.grid(), point, reps, level)
}

/// Pointwise percentile band for `a − b`, with both curves of a replicate
/// computed on the same resample.
pub fn difference_bands<A: CurveEstimator + ?Sized, B: CurveEstimator + ?Sized>(
    data: &Dataset,
    a: &A,
    b_est: &B,
    b: usize,
    level: f64,
    seed: u64,
) -> Result<BandResult> {
    check_args(b, level)?;
    if a.grid() != b_est.grid() {
        return Err(DrError::InvalidInput("difference bands need a shared grid".into()));
    }
    let diff = |d: &Dataset| -> Result<Vec<f64>> {
        let ca = a.estimate(d)?;
        let cb = b_est.estimate(d)?;
        Ok(ca.iter().zip(&cb).map(|(x, y)| x - y).collect())
    };
    let point = diff(data)?;
    let n = data.n();
    let reps: Vec<Option<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|r| diff(&data.resample(&resample_indices(n, seed, r))).ok())
        .collect();
    assemble(a.grid(), point, reps, level)
}
