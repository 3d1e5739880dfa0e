//! Control-function estimator in three steps: OLS first stage, probit on the
//! residual-augmented design, then averaging `Φ` over the empirical
//! residual distribution to integrate the confounder out.

use crate::dataset::Dataset;
use crate::error::{DrError, Result};
use crate::numerics::{dot, ols, std_normal_cdf, OlsFit};
use crate::probit::{probit_fit, ProbitFit};

/// Scaled structural parameters identified by the residual-augmented probit:
/// `β̃ = β / σ_ε` and `ρ̃ = (r / σ₂) / σ_ε` with `σ_ε = √(1 − r²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaTilde {
    pub beta1_tilde: Vec<f64>,
    pub beta2_tilde: f64,
    pub rho_tilde: f64,
}

impl ThetaTilde {
    /// Conditional index `x'β̃₁ + y₂β̃₂` before adding the residual term.
    pub fn index(&self, x: &[f64], y2: f64) -> f64 {
        dot(x, &self.beta1_tilde) + y2 * self.beta2_tilde
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstStage {
    /// OLS of `Y₂` on `[X, Z]`; the first `k` coefficients are `γ₁`.
    pub gamma: OlsFit,
    pub residuals: Vec<f64>,
    /// Homoskedastic Wald F for `γ₂ = 0`; infinite when the fit is exact.
    pub f_statistic: f64,
    /// Set when `Y₂` is an exact linear function of `(X, Z)`.
    pub degenerate: bool,
    /// `RSS / n`, the maximum likelihood estimate of `σ₂²`.
    pub sigma2_sq: f64,
    k: usize,
}

impl FirstStage {
    pub fn gamma1(&self) -> &[f64] {
        &self.gamma.coefficients[..self.k]
    }

    pub fn gamma2(&self) -> &[f64] {
        &self.gamma.coefficients[self.k..]
    }
}

/// OLS of the endogenous regressor on exogenous regressors and instruments.
pub fn first_stage(data: &Dataset) -> Result<FirstStage> {
    let n = data.n() as f64;
    let (k, l) = (data.k(), data.l());
    let y2 = data.endogenous();
    let full = ols(&data.first_stage_design(), y2)?;
    let restricted = ols(data.exogenous(), y2)?;
    let tss: f64 = {
        let mean = y2.iter().sum::<f64>() / n;
        y2.iter().map(|v| (v - mean).powi(2)).sum()
    };
    let degenerate = full.rss <= 1e-24 * tss.max(f64::MIN_POSITIVE);
    let f_statistic = if degenerate {
        f64::INFINITY
    } else {
        let dof = n - (k + l) as f64;
        ((restricted.rss - full.rss).max(0.0) / l as f64) / (full.rss / dof)
    };
    let residuals = if degenerate { vec![0.0; data.n()] } else { full.residuals.clone() };
    let sigma2_sq = full.rss / n;
    Ok(FirstStage { gamma: full, residuals, f_statistic, degenerate, sigma2_sq, k })
}

/// Probit of `1{Y ≤ y}` on `[X, Y₂, V̂]`, returning the split coefficients
/// together with the underlying probit fit.
pub fn second_stage_fit(
    data: &Dataset,
    residuals: &[f64],
    threshold: f64,
) -> Result<(ThetaTilde, ProbitFit)> {
    if residuals.len() != data.n() {
        return Err(DrError::InvalidInput("residual vector length differs from sample size".into()));
    }
    if residuals.iter().all(|&v| v == 0.0) {
        return Err(DrError::RankDeficient);
    }
    let indicator = data.indicator(threshold);
    let design = data.exogenous().with_columns(&[data.endogenous(), residuals])?;
    let fit = probit_fit(&design, &indicator)?;
    let k = data.k();
    let theta = ThetaTilde {
        beta1_tilde: fit.coefficients[..k].to_vec(),
        beta2_tilde: fit.coefficients[k],
        rho_tilde: fit.coefficients[k + 1],
    };
    Ok((theta, fit))
}

/// Second step at threshold `y`.
pub fn second_stage(data: &Dataset, residuals: &[f64], threshold: f64) -> Result<ThetaTilde> {
    second_stage_fit(data, residuals, threshold).map(|(t, _)| t)
}

/// `n⁻¹ Σᵢ Φ(x'β̃₁ + y₂β̃₂ + V̂ᵢρ̃)`, with `x` including the intercept.
pub fn three_step_cdf_at(theta: &ThetaTilde, residuals: &[f64], x: &[f64], y2: f64) -> f64 {
    let base = theta.index(x, y2);
    let total: f64 = residuals.iter().map(|v| std_normal_cdf(base + v * theta.rho_tilde)).sum();
    (total / residuals.len() as f64).clamp(0.0, 1.0)
}
