//! Monte Carlo study for a censored outcome with one endogenous regressor.
//!
//! ```text
//! X, Z ~ N(0, 1) iid        (U, V) ~ N(0, [[1, ρ], [ρ, 1]])
//! Y₂ = 1 + X + Z + V        Ỹ = 1 + X + Y₂ + U        Y = max(c, Ỹ)
//! ```
//!
//! With `c = 2`, `F(y | x, y₂) = Φ(y − 1 − x − y₂)` for `y ≥ 2` and 0 below.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dataset::{Dataset, EvalPoint};
use crate::driver::{fit_grid, Estimator, ThresholdGrid};
use crate::error::{DrError, Result};
use crate::monotone::{check_levels, default_levels, Monotonizer};
use crate::numerics::std_normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpConfig {
    pub rho: f64,
    pub n: usize,
    /// Censoring point; `f64::NEG_INFINITY` disables censoring.
    pub censor_at: f64,
    pub seed: u64,
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(DrError::InvalidInput(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        if self.n < 10 {
            return Err(DrError::InvalidInput(format!("n must be at least 10, got {}", self.n)));
        }
        if self.censor_at.is_nan() || self.censor_at == f64::INFINITY {
            return Err(DrError::InvalidInput("censoring point must be finite or -inf".into()));
        }
        Ok(())
    }
}

/// Draws the sample; per observation the normals are taken in the order
/// `x, z, e₁, e₂`, with `U = e₁` and `V = ρe₁ + √(1 − ρ²)e₂`.
pub fn draw_dgp(config: &DgpConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n;
    let s = (1.0 - config.rho * config.rho).sqrt();
    let (mut y, mut y2, mut x, mut z) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let xi: f64 = rng.sample(StandardNormal);
        let zi: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let u = e1;
        let v = config.rho * e1 + s * e2;
        let y2i = 1.0 + xi + zi + v;
        let latent = 1.0 + xi + y2i + u;
        y.push(latent.max(config.censor_at));
        y2.push(y2i);
        x.push(xi);
        z.push(zi);
    }
    Dataset::from_columns(y, y2, &[x], &[z])
}

/// True conditional CDF under censoring at 2.
pub fn true_cdf(y: f64, x: f64, y2: f64) -> f64 {
    true_cdf_censored(y, x, y2, 2.0)
}

/// True conditional CDF under censoring at `censor_at`.
pub fn true_cdf_censored(y: f64, x: f64, y2: f64, censor_at: f64) -> f64 {
    if y >= censor_at {
        std_normal_cdf(y - 1.0 - x - y2)
    } else {
        0.0
    }
}

/// Curve source in the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimEstimator {
    Dr(Estimator),
    /// Returns the true CDF; a zero-error reference.
    Oracle,
}

impl SimEstimator {
    pub fn name(self) -> &'static str {
        match self {
            SimEstimator::Dr(e) => e.name(),
            SimEstimator::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    /// `(x, y₂)` evaluation points.
    pub scenarios: Vec<(f64, f64)>,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub grid: ThresholdGrid,
    pub levels: Vec<f64>,
    pub estimators: Vec<SimEstimator>,
    pub monotonizers: Vec<Monotonizer>,
    pub rho: f64,
    pub censor_at: f64,
    pub seed: u64,
}

impl StudyConfig {
    /// Three-step and probit, both monotonizers, `x = y₂ = 1`, 50 grid points on `[1, 5]`.
    pub fn standard(sample_sizes: Vec<usize>, replications: usize, seed: u64) -> Self {
        Self {
            scenarios: vec![(1.0, 1.0)],
            sample_sizes,
            replications,
            grid: default_sim_grid(),
            levels: default_levels(),
            estimators: vec![SimEstimator::Dr(Estimator::ThreeStep), SimEstimator::Dr(Estimator::Probit)],
            monotonizers: vec![Monotonizer::Rearrange, Monotonizer::Isotonic],
            rho: 0.7,
            censor_at: 2.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(DrError::InvalidInput("replications must be at least 2".into()));
        }
        if self.scenarios.is_empty() || self.sample_sizes.is_empty() {
            return Err(DrError::InvalidInput("need at least one scenario and sample size".into()));
        }
        if self.estimators.is_empty() || self.monotonizers.is_empty() {
            return Err(DrError::InvalidInput("need at least one estimator and monotonizer".into()));
        }
        check_levels(&self.levels)?;
        for &n in &self.sample_sizes {
            DgpConfig { rho: self.rho, n, censor_at: self.censor_at, seed: 0 }.validate()?;
        }
        Ok(())
    }
}

/// 50 equidistant thresholds on `[1, 5]`.
pub fn default_sim_grid() -> ThresholdGrid {
    ThresholdGrid::linspace(1.0, 5.0, 50).expect("valid grid")
}

/// 41 equidistant thresholds on `[1, 5]` (step 0.1).
pub fn alternative_sim_grid() -> ThresholdGrid {
    ThresholdGrid::linspace(1.0, 5.0, 41).expect("valid grid")
}

/// Seed of replication `r` at sample size `n`; shared by all estimators.
pub fn replication_seed(seed: u64, n: usize, r: usize) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [n as u64, r as u64] {
        h = splitmix(h ^ splitmix(v));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One row of the report.
#[derive(Debug, Clone, PartialEq)]
pub struct McCell {
    pub estimator: SimEstimator,
    pub monotonizer: Monotonizer,
    pub n: usize,
    pub x: f64,
    pub y2: f64,
    pub avg_bias_sq: f64,
    pub avg_variance: f64,
    pub avg_mse: f64,
    /// Successful replications entering the averages.
    pub replications: usize,
    pub failed: usize,
    pub grid_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub cells: Vec<McCell>,
}

impl McReport {
    pub fn find(
        &self,
        estimator: SimEstimator,
        monotonizer: Monotonizer,
        n: usize,
        scenario: (f64, f64),
    ) -> Option<&McCell> {
        self.cells.iter().find(|c| {
            c.estimator == estimator && c.monotonizer == monotonizer && c.n == n && (c.x, c.y2) == scenario
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "estimator", "monotonizer", "n", "x", "y2", "avg_bias_sq", "avg_variance", "avg_mse",
            "replications", "failed", "grid_size",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.estimator.name().to_string(),
                c.monotonizer.name().to_string(),
                c.n.to_string(),
                c.x.to_string(),
                c.y2.to_string(),
                c.avg_bias_sq.to_string(),
                c.avg_variance.to_string(),
                c.avg_mse.to_string(),
                c.replications.to_string(),
                c.failed.to_string(),
                c.grid_size.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Monotonized curves of one replication, indexed `[estimator][scenario][monotonizer]`;
/// `None` when the estimator failed on the whole sample.
type RepCurves = Vec<Option<Vec<Vec<Vec<f64>>>>>;

fn one_replication(config: &StudyConfig, n: usize, r: usize) -> Result<RepCurves> {
    let dgp = DgpConfig { rho: config.rho, n, censor_at: config.censor_at, seed: replication_seed(config.seed, n, r) };
    let data = draw_dgp(&dgp)?;
    let ys = config.grid.values();
    let mut out = Vec::with_capacity(config.estimators.len());
    for est in &config.estimators {
        let raw: Option<Vec<Vec<f64>>> = match est {
            SimEstimator::Oracle => Some(
                config
                    .scenarios
                    .iter()
                    .map(|&(x, y2)| ys.iter().map(|&y| true_cdf_censored(y, x, y2, config.censor_at)).collect())
                    .collect(),
            ),
            SimEstimator::Dr(e) => match fit_grid(&data, *e, &config.grid) {
                Ok(fitted) => config
                    .scenarios
                    .iter()
                    .map(|&(x, y2)| fitted.curve_at(&EvalPoint::new(vec![x], y2)).map(|c| c.values).ok())
                    .collect(),
                Err(err) => {
                    log::debug!("replication {r} at n={n}: {} failed: {err}", e.name());
                    None
                }
            },
        };
        out.push(raw.map(|per_scenario| {
            per_scenario
                .iter()
                .map(|v| config.monotonizers.iter().map(|m| m.apply_values(v, &config.levels)).collect())
                .collect()
        }));
    }
    Ok(out)
}

/// Runs the full sweep.
///
/// Replications run in parallel; moments are accumulated in replication
/// order so the report is independent of scheduling.
pub fn run_study(config: &StudyConfig) -> Result<McReport> {
    config.validate()?;
    let ys = config.grid.values();
    let g = ys.len();
    let mut cells = Vec::new();
    for &n in &config.sample_sizes {
        let reps: Vec<RepCurves> = (0..config.replications)
            .into_par_iter()
            .map(|r| one_replication(config, n, r))
            .collect::<Result<_>>()?;
        for (ei, est) in config.estimators.iter().enumerate() {
            for (si, &(x, y2)) in config.scenarios.iter().enumerate() {
                let truth: Vec<f64> = ys.iter().map(|&y| true_cdf_censored(y, x, y2, config.censor_at)).collect();
                for (mi, &mono) in config.monotonizers.iter().enumerate() {
                    let curves: Vec<&Vec<f64>> =
                        reps.iter().filter_map(|rep| rep[ei].as_ref().map(|c| &c[si][mi])).collect();
                    let ok = curves.len();
                    let failed = config.replications - ok;
                    if failed > 0 {
                        log::warn!("{} at n={n}: {failed} replications failed", est.name());
                    }
                    let (b, v, m) = moments(&curves, &truth).ok_or(DrError::ReplicateFailure {
                        succeeded: ok,
                        requested: config.replications,
                    })?;
                    cells.push(McCell {
                        estimator: *est,
                        monotonizer: mono,
                        n,
                        x,
                        y2,
                        avg_bias_sq: b,
                        avg_variance: v,
                        avg_mse: m,
                        replications: ok,
                        failed,
                        grid_size: g,
                    });
                }
            }
        }
    }
    Ok(McReport { cells })
}

/// Grid averages of squared bias, population variance and MSE.
fn moments(curves: &[&Vec<f64>], truth: &[f64]) -> Option<(f64, f64, f64)> {
    if curves.len() < 2 {
        return None;
    }
    let r = curves.len() as f64;
    let g = truth.len() as f64;
    let (mut sb, mut sv, mut sm) = (0.0, 0.0, 0.0);
    for (j, &t) in truth.iter().enumerate() {
        let mean = curves.iter().map(|c| c[j]).sum::<f64>() / r;
        let var = curves.iter().map(|c| (c[j] - mean).powi(2)).sum::<f64>() / r;
        let bias_sq = (mean - t).powi(2);
        sb += bias_sq;
        sv += var;
        sm += bias_sq + var;
    }
    Some((sb / g, sv / g, sm / g))
}
