//! Distribution regression over a threshold grid: one binary-response fit per
//! threshold, assembled into a conditional CDF curve and inverted to
//! conditional quantiles.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataset::{Dataset, EvalPoint};
use crate::error::{DrError, Result};
use crate::ivprobit_ml::{ml_fit_with_first_stage, start_from_three_step, ThetaFull};
use crate::monotone::{check_levels, monotonize, MonotoneCurve, Monotonizer};
use crate::numerics::{dot, std_normal_cdf, DesignMatrix};
use crate::probit::probit_fit;
use crate::three_step::{first_stage, three_step_cdf_at, ThetaTilde};

/// Strictly increasing, finite, nonempty vector of thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGrid {
    values: Vec<f64>,
}

impl ThresholdGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(DrError::InvalidInput("threshold grid is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DrError::NonFinite("threshold grid"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DrError::InvalidInput("threshold grid must be strictly increasing".into()));
        }
        Ok(Self { values })
    }

    /// `m` equidistant points on `[a, b]`.
    pub fn linspace(a: f64, b: f64, m: usize) -> Result<Self> {
        match m {
            0 => Self::new(vec![]),
            1 => Self::new(vec![a]),
            _ => Self::new((0..m).map(|j| a + (b - a) * j as f64 / (m - 1) as f64).collect()),
        }
    }

    /// Sorted distinct values of `outcomes`.
    pub fn observed(outcomes: &[f64]) -> Result<Self> {
        let mut v = outcomes.to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        Self::new(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// Probit of `1{Y ≤ y}` on `[X, Y₂]`, ignoring endogeneity.
    Probit,
    IvMl,
    ThreeStep,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Probit => "probit",
            Estimator::IvMl => "iv-ml",
            Estimator::ThreeStep => "three-step",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = DrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "probit" | "ols" => Ok(Estimator::Probit),
            "iv-ml" | "ivml" | "ml" => Ok(Estimator::IvMl),
            "three-step" | "threestep" | "iv" => Ok(Estimator::ThreeStep),
            other => Err(DrError::InvalidInput(format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PointStatus {
    Ok,
    /// No observation at or below the threshold; value is exactly 0.
    DegenerateLow,
    /// Every observation at or below the threshold; value is exactly 1.
    DegenerateHigh,
    /// Estimation failed; value filled from neighboring points.
    Failed,
}

/// Estimated conditional CDF on a grid; not necessarily monotone.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfCurve {
    pub grid: ThresholdGrid,
    pub values: Vec<f64>,
    pub flags: Vec<PointStatus>,
}

impl CdfCurve {
    /// Linear interpolation between grid points, constant beyond the ends.
    pub fn value_at(&self, y: f64) -> f64 {
        interpolate(self.grid.values(), &self.values, y)
    }

    pub fn failed_points(&self) -> usize {
        self.flags.iter().filter(|&&f| f == PointStatus::Failed).count()
    }
}

pub(crate) fn interpolate(grid: &[f64], values: &[f64], y: f64) -> f64 {
    let j = grid.partition_point(|&g| g <= y);
    if j == 0 {
        return values[0];
    }
    if j == grid.len() {
        return values[grid.len() - 1];
    }
    let t = (y - grid[j - 1]) / (grid[j] - grid[j - 1]);
    values[j - 1] + t * (values[j] - values[j - 1])
}

/// Per-threshold fitted model.
#[derive(Debug, Clone, PartialEq)]
pub enum PointFit {
    Probit(Vec<f64>),
    ThreeStep(ThetaTilde),
    IvMl(ThetaFull),
    DegenerateLow,
    DegenerateHigh,
    Failed(DrError),
}

/// Fits at every grid point, evaluable at any covariate point.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedGrid {
    pub estimator: Estimator,
    pub grid: ThresholdGrid,
    pub fits: Vec<PointFit>,
    /// First-stage residuals, kept for the three-step averaging.
    residuals: Vec<f64>,
    k: usize,
}

fn degenerate_status(data: &Dataset, y: f64) -> Option<PointFit> {
    let below = data.outcome().iter().filter(|&&v| v <= y).count();
    if below == 0 {
        Some(PointFit::DegenerateLow)
    } else if below == data.n() {
        Some(PointFit::DegenerateHigh)
    } else {
        None
    }
}

fn fit_probit_on(design: &DesignMatrix, data: &Dataset, y: f64) -> PointFit {
    if let Some(d) = degenerate_status(data, y) {
        return d;
    }
    match probit_fit(design, &data.indicator(y)) {
        Ok(fit) => PointFit::Probit(fit.coefficients),
        Err(e) => PointFit::Failed(e),
    }
}

/// Runs `estimator` at each threshold of `grid`.
///
/// Errors only when the data cannot support the estimator at all; failures at
/// individual thresholds are recorded as [`PointFit::Failed`].
pub fn fit_grid(data: &Dataset, estimator: Estimator, grid: &ThresholdGrid) -> Result<FittedGrid> {
    let k = data.k();
    let ys = grid.values();
    let (fits, residuals) = match estimator {
        Estimator::Probit => {
            let design = data.structural_design();
            let fits = ys.par_iter().map(|&y| fit_probit_on(&design, data, y)).collect();
            (fits, Vec::new())
        }
        Estimator::ThreeStep => {
            let fs = first_stage(data)?;
            if fs.degenerate {
                return Err(DrError::DegenerateFirstStage);
            }
            let design = data.exogenous().with_columns(&[data.endogenous(), &fs.residuals])?;
            let fits = ys
                .par_iter()
                .map(|&y| match fit_probit_on(&design, data, y) {
                    PointFit::Probit(c) => PointFit::ThreeStep(ThetaTilde {
                        beta1_tilde: c[..k].to_vec(),
                        beta2_tilde: c[k],
                        rho_tilde: c[k + 1],
                    }),
                    other => other,
                })
                .collect();
            (fits, fs.residuals)
        }
        Estimator::IvMl => {
            let fs = first_stage(data)?;
            if fs.degenerate {
                return Err(DrError::DegenerateFirstStage);
            }
            // Sequential so that a failed start can fall back to the neighbor's optimum.
            let mut fits = Vec::with_capacity(ys.len());
            let mut previous: Option<ThetaFull> = None;
            for &y in ys {
                if let Some(d) = degenerate_status(data, y) {
                    fits.push(d);
                    continue;
                }
                let start = start_from_three_step(data, &fs, y);
                let mut result = ml_fit_with_first_stage(data, &fs, y, Some(&start));
                if let (Err(_), Some(prev)) = (&result, &previous) {
                    result = ml_fit_with_first_stage(data, &fs, y, Some(prev));
                }
                fits.push(match result {
                    Ok(fit) => {
                        previous = Some(fit.theta.clone());
                        PointFit::IvMl(fit.theta)
                    }
                    Err(e) => PointFit::Failed(e),
                });
            }
            (fits, Vec::new())
        }
    };
    Ok(FittedGrid { estimator, grid: grid.clone(), fits, residuals, k })
}

impl FittedGrid {
    /// Conditional CDF at `point`, with failed thresholds filled in.
    pub fn curve_at(&self, point: &EvalPoint) -> Result<CdfCurve> {
        if point.x.len() + 1 != self.k {
            return Err(DrError::InvalidInput(format!(
                "evaluation point has {} covariates, model has {}",
                point.x.len(),
                self.k - 1
            )));
        }
        let x = point.design_row();
        let mut values = Vec::with_capacity(self.fits.len());
        let mut flags = Vec::with_capacity(self.fits.len());
        for fit in &self.fits {
            let (v, f) = match fit {
                PointFit::Probit(c) => {
                    (std_normal_cdf(dot(&x, &c[..self.k]) + point.y2 * c[self.k]), PointStatus::Ok)
                }
                PointFit::ThreeStep(t) => {
                    (three_step_cdf_at(t, &self.residuals, &x, point.y2), PointStatus::Ok)
                }
                PointFit::IvMl(t) => {
                    (std_normal_cdf(dot(&x, &t.beta1) + point.y2 * t.beta2), PointStatus::Ok)
                }
                PointFit::DegenerateLow => (0.0, PointStatus::DegenerateLow),
                PointFit::DegenerateHigh => (1.0, PointStatus::DegenerateHigh),
                PointFit::Failed(_) => (f64::NAN, PointStatus::Failed),
            };
            values.push(v);
            flags.push(f);
        }
        fill_failed(self.grid.values(), &mut values, &flags)?;
        Ok(CdfCurve { grid: self.grid.clone(), values, flags })
    }

    pub fn failures(&self) -> impl Iterator<Item = (f64, &DrError)> {
        self.grid.values().iter().zip(&self.fits).filter_map(|(&y, f)| match f {
            PointFit::Failed(e) => Some((y, e)),
            _ => None,
        })
    }
}

/// Interior gaps: linear interpolation between the nearest valid neighbors.
/// Edge gaps: nearest valid value.
fn fill_failed(grid: &[f64], values: &mut [f64], flags: &[PointStatus]) -> Result<()> {
    let valid: Vec<usize> = (0..values.len()).filter(|&i| flags[i] != PointStatus::Failed).collect();
    if valid.is_empty() {
        return Err(DrError::CurveFailed);
    }
    for i in 0..values.len() {
        if flags[i] != PointStatus::Failed {
            continue;
        }
        let after = valid.partition_point(|&j| j < i);
        values[i] = match (after.checked_sub(1).map(|a| valid[a]), valid.get(after)) {
            (Some(lo), Some(&hi)) => {
                let t = (grid[i] - grid[lo]) / (grid[hi] - grid[lo]);
                values[lo] + t * (values[hi] - values[lo])
            }
            (Some(lo), None) => values[lo],
            (None, Some(&hi)) => values[hi],
            (None, None) => unreachable!("valid is nonempty"),
        };
    }
    Ok(())
}

/// Fits `estimator` over `grid` and evaluates the curve at `point`.
pub fn fit_curve(
    data: &Dataset,
    estimator: Estimator,
    grid: &ThresholdGrid,
    point: &EvalPoint,
) -> Result<CdfCurve> {
    point.check(data)?;
    fit_grid(data, estimator, grid)?.curve_at(point)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantileFlag {
    Ok,
    /// The level lies at or below the first curve value; the smallest grid point is returned.
    BelowRange,
    /// The level exceeds every curve value; the quantile is `+∞`.
    LevelOutOfRange,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCurve {
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
    pub flags: Vec<QuantileFlag>,
}

/// Generalized inverse `inf{y : F(y) ≥ u}` with linear interpolation between
/// the bracketing grid points.
pub fn quantiles_from_curve(curve: &MonotoneCurve, levels: &[f64]) -> Result<QuantileCurve> {
    check_levels(levels)?;
    let f = &curve.values;
    if f.windows(2).any(|w| w[0] > w[1]) {
        return Err(DrError::InvalidInput("quantiles require a monotone curve".into()));
    }
    let g = curve.grid.values();
    let mut values = Vec::with_capacity(levels.len());
    let mut flags = Vec::with_capacity(levels.len());
    for &u in levels {
        let j = f.partition_point(|&v| v < u);
        let (q, flag) = if j == f.len() {
            (f64::INFINITY, QuantileFlag::LevelOutOfRange)
        } else if j == 0 {
            let flag = if f[0] > u { QuantileFlag::BelowRange } else { QuantileFlag::Ok };
            (g[0], flag)
        } else {
            let t = (u - f[j - 1]) / (f[j] - f[j - 1]);
            (g[j - 1] + t * (g[j] - g[j - 1]), QuantileFlag::Ok)
        };
        values.push(q);
        flags.push(flag);
    }
    Ok(QuantileCurve { levels: levels.to_vec(), values, flags })
}

/// Everything needed to turn a dataset into one monotonized curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub estimator: Estimator,
    pub monotonizer: Monotonizer,
    pub grid: ThresholdGrid,
    pub point: EvalPoint,
    /// Quantile levels used by rearrangement.
    pub levels: Vec<f64>,
}

impl Recipe {
    pub fn raw_curve(&self, data: &Dataset) -> Result<CdfCurve> {
        fit_curve(data, self.estimator, &self.grid, &self.point)
    }

    pub fn evaluate(&self, data: &Dataset) -> Result<MonotoneCurve> {
        monotonize(&self.raw_curve(data)?, self.monotonizer, &self.levels)
    }
}
