//! Linear mean regressions for comparison: OLS and two-stage least squares.
//!
//! Coefficients are ordered `[intercept, endogenous, exogenous...]`.

use nalgebra::DMatrix;

use crate::dataset::{Dataset, EvalPoint};
use crate::error::Result;
use crate::numerics::{dot, ols, DesignMatrix};
use crate::three_step::first_stage;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub vcov: DMatrix<f64>,
    /// Residual variance with `n − p` degrees of freedom.
    pub sigma2: f64,
}

impl LinearFit {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.coefficients.len()).map(|j| self.vcov[(j, j)].max(0.0).sqrt()).collect()
    }

    /// Conditional mean at `point` with its delta-method standard error.
    pub fn predict(&self, point: &EvalPoint) -> (f64, f64) {
        let w = regressor_row(point);
        let value = dot(&w, &self.coefficients);
        let mut var = 0.0;
        for i in 0..w.len() {
            for j in 0..w.len() {
                var += w[i] * self.vcov[(i, j)] * w[j];
            }
        }
        (value, var.max(0.0).sqrt())
    }
}

fn regressor_row(point: &EvalPoint) -> Vec<f64> {
    let mut w = vec![1.0, point.y2];
    w.extend_from_slice(&point.x);
    w
}

/// `[1, Y₂, X without intercept]` with `Y₂` replaced by `endogenous`.
fn design_with(data: &Dataset, endogenous: &[f64]) -> Result<DesignMatrix> {
    let x = data.exogenous();
    let mut cols = vec![x.column(0), endogenous.to_vec()];
    cols.extend((1..x.ncols()).map(|j| x.column(j)));
    DesignMatrix::from_columns(&cols)
}

/// OLS of `Y` on `[1, Y₂, X]` with homoskedastic standard errors.
pub fn ols_fit(data: &Dataset) -> Result<LinearFit> {
    let design = design_with(data, data.endogenous())?;
    let fit = ols(&design, data.outcome())?;
    let sigma2 = fit.rss / (data.n() - design.ncols()) as f64;
    Ok(LinearFit { vcov: &fit.unscaled_cov * sigma2, coefficients: fit.coefficients, sigma2 })
}

/// 2SLS as two OLS passes; the residual variance uses the original `Y₂`.
pub fn tsls_fit(data: &Dataset) -> Result<LinearFit> {
    let fs = ols(&data.first_stage_design(), data.endogenous())?;
    let fitted = fs.fitted(data.endogenous());
    let second = ols(&design_with(data, &fitted)?, data.outcome())?;
    let original = design_with(data, data.endogenous())?;
    let predicted = original.mul_vec(&second.coefficients);
    let rss: f64 = data.outcome().iter().zip(&predicted).map(|(y, p)| (y - p).powi(2)).sum();
    let sigma2 = rss / (data.n() - original.ncols()) as f64;
    Ok(LinearFit { vcov: &second.unscaled_cov * sigma2, coefficients: second.coefficients, sigma2 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearReport {
    pub ols: LinearFit,
    pub iv: LinearFit,
    pub first_stage_f: f64,
}

pub fn linear_report(data: &Dataset) -> Result<LinearReport> {
    Ok(LinearReport { ols: ols_fit(data)?, iv: tsls_fit(data)?, first_stage_f: first_stage(data)?.f_statistic })
}
