//! Full-information maximum likelihood for the probit model with one
//! continuous endogenous regressor, at a fixed threshold `y`.
//!
//! Model, for `I_y = 1{Y ≤ y}`:
//!
//! ```text
//! I*  = X'β₁ + Y₂β₂ + U          I = 1{I* ≥ 0}
//! Y₂  = X'γ₁ + Z'γ₂ + V          V ~ N(0, σ₂²)
//! corr(U, V) = r,  Var(U) = 1
//! ```
//!
//! Writing `U = (r/σ₂)V + ε` with `ε ~ N(0, 1 − r²)`, observation `i`
//! contributes
//!
//! ```text
//! I log Φ(m) + (1 − I) log Φ(−m) − ½ log 2π − ½ log σ₂² − v²/(2σ₂²)
//! v = Y₂ − X'γ₁ − Z'γ₂,   m = (X'β₁ + Y₂β₂ + (r/σ₂) v) / √(1 − r²)
//! ```
//!
//! `r` is the correlation between `U` and `V`. In terms of the covariance
//! `σ₁₂ = r σ₂`, the regression coefficient of `U` on `V` is
//! `σ₁₂/σ₂² = r/σ₂` and the residual variance is `1 − r²`.

use nalgebra::DMatrix;

use crate::dataset::Dataset;
use crate::error::{DrError, Result};
use crate::numerics::{
    dot, log_cdf_and_hazard, maximize_smooth, spd_inverse, std_normal_cdf, std_normal_quantile,
    OptimOptions, ParamTransform,
};
use crate::three_step::{first_stage, second_stage, FirstStage, ThetaTilde};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Largest admissible `|atanh(r)|` before the fit is declared a boundary solution.
pub const BOUNDARY_ATANH: f64 = 7.0;

/// Score norm (in the optimizer's unconstrained coordinates) accepted as converged.
pub const SCORE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaFull {
    pub beta1: Vec<f64>,
    pub beta2: f64,
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    /// Correlation between the structural and first-stage errors.
    pub rho: f64,
    pub sigma2_sq: f64,
}

impl ThetaFull {
    pub fn dim(k: usize, l: usize) -> usize {
        2 * k + l + 3
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::dim(self.beta1.len(), self.gamma2.len()));
        v.extend_from_slice(&self.beta1);
        v.push(self.beta2);
        v.extend_from_slice(&self.gamma1);
        v.extend_from_slice(&self.gamma2);
        v.push(self.rho);
        v.push(self.sigma2_sq);
        v
    }

    pub fn from_slice(v: &[f64], k: usize, l: usize) -> Self {
        assert_eq!(v.len(), Self::dim(k, l), "parameter vector length");
        Self {
            beta1: v[..k].to_vec(),
            beta2: v[k],
            gamma1: v[k + 1..2 * k + 1].to_vec(),
            gamma2: v[2 * k + 1..2 * k + 1 + l].to_vec(),
            rho: v[2 * k + 1 + l],
            sigma2_sq: v[2 * k + 2 + l],
        }
    }

    fn transforms(k: usize, l: usize) -> Vec<ParamTransform> {
        let mut t = vec![ParamTransform::Free; 2 * k + l + 1];
        t.push(ParamTransform::Correlation);
        t.push(ParamTransform::Positive);
        t
    }

    pub fn sigma_eps(&self) -> f64 {
        (1.0 - self.rho * self.rho).sqrt()
    }

    /// Coefficient of `V` in the structural error, `σ₁₂ / σ₂²`.
    pub fn error_slope(&self) -> f64 {
        self.rho / self.sigma2_sq.sqrt()
    }

    /// Scaled parameters estimated by the residual-augmented probit.
    pub fn tilde(&self) -> ThetaTilde {
        let s = self.sigma_eps();
        ThetaTilde {
            beta1_tilde: self.beta1.iter().map(|b| b / s).collect(),
            beta2_tilde: self.beta2 / s,
            rho_tilde: self.error_slope() / s,
        }
    }

    /// Inverts [`ThetaFull::tilde`] given first-stage parameters.
    pub fn from_tilde(tilde: &ThetaTilde, gamma1: &[f64], gamma2: &[f64], sigma2_sq: f64) -> Self {
        // c = ρ̃ σ₂ = r / σ_ε  ⇒  r = c / √(1 + c²),  σ_ε = 1 / √(1 + c²)
        let c = tilde.rho_tilde * sigma2_sq.sqrt();
        let s = 1.0 / (1.0 + c * c).sqrt();
        Self {
            beta1: tilde.beta1_tilde.iter().map(|b| b * s).collect(),
            beta2: tilde.beta2_tilde * s,
            gamma1: gamma1.to_vec(),
            gamma2: gamma2.to_vec(),
            rho: c * s,
            sigma2_sq,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvProbitMlFit {
    pub theta: ThetaFull,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Score in the optimizer coordinates (`atanh r`, `log σ₂²` for the constrained pair).
    pub score_at_opt: Vec<f64>,
    /// Inverse observed information in the natural parameterization, when positive definite.
    pub vcov: Option<DMatrix<f64>>,
}

impl IvProbitMlFit {
    pub fn std_errors(&self) -> Option<Vec<f64>> {
        self.vcov
            .as_ref()
            .map(|v| (0..v.nrows()).map(|j| v[(j, j)].max(0.0).sqrt()).collect())
    }
}

/// Log-likelihood at threshold `y` and its exact gradient with respect to
/// `(β₁, β₂, γ₁, γ₂, r, σ₂²)`.
pub fn ml_loglik(theta: &ThetaFull, data: &Dataset, threshold: f64) -> Result<(f64, Vec<f64>)> {
    let (k, l) = (data.k(), data.l());
    if theta.beta1.len() != k || theta.gamma1.len() != k || theta.gamma2.len() != l {
        return Err(DrError::InvalidInput("parameter dimensions do not match the dataset".into()));
    }
    let one_minus_r2 = 1.0 - theta.rho * theta.rho;
    // Negated so that NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(one_minus_r2 > 0.0) || !(theta.sigma2_sq > 0.0) {
        return Err(DrError::NonFinite("sigma_eps or sigma_2"));
    }
    let sig_eps = one_minus_r2.sqrt();
    let s2 = theta.sigma2_sq;
    let sig2 = s2.sqrt();
    let c = theta.rho / sig2;
    let r = theta.rho;

    let mut value = 0.0;
    let mut grad = vec![0.0; ThetaFull::dim(k, l)];
    let (ib2, ig1, ig2, ir, is) = (k, k + 1, 2 * k + 1, 2 * k + 1 + l, 2 * k + 2 + l);
    let (x, z, y2, y) = (data.exogenous(), data.instruments(), data.endogenous(), data.outcome());
    for i in 0..data.n() {
        let xi = x.row(i);
        let zi = z.row(i);
        let v = y2[i] - dot(xi, &theta.gamma1) - dot(zi, &theta.gamma2);
        let m = (dot(xi, &theta.beta1) + y2[i] * theta.beta2 + c * v) / sig_eps;
        let sign = if y[i] <= threshold { 1.0 } else { -1.0 };
        let (lp, hazard) = log_cdf_and_hazard(sign * m);
        value += lp - LN_SQRT_2PI - 0.5 * s2.ln() - v * v / (2.0 * s2);

        // a = ∂/∂m of the binary term
        let a = sign * hazard;
        let a_eps = a / sig_eps;
        for j in 0..k {
            grad[j] += a_eps * xi[j];
        }
        grad[ib2] += a_eps * y2[i];
        let dv = -a_eps * c + v / s2;
        for j in 0..k {
            grad[ig1 + j] += dv * xi[j];
        }
        for j in 0..l {
            grad[ig2 + j] += dv * zi[j];
        }
        grad[ir] += a * (v / (sig2 * sig_eps) + m * r / one_minus_r2);
        grad[is] += a * (-r * v / (2.0 * s2 * sig2 * sig_eps)) - 0.5 / s2 + v * v / (2.0 * s2 * s2);
    }
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(DrError::NonFinite("log-likelihood"));
    }
    Ok((value, grad))
}

/// Consistent start values from the three-step estimator, falling back to a
/// null structural equation if the residual-augmented probit fails.
pub fn start_from_three_step(data: &Dataset, first: &FirstStage, threshold: f64) -> ThetaFull {
    match second_stage(data, &first.residuals, threshold) {
        Ok(tilde) => {
            ThetaFull::from_tilde(&tilde, first.gamma1(), first.gamma2(), first.sigma2_sq)
        }
        Err(_) => null_start(data, first, threshold),
    }
}

fn null_start(data: &Dataset, first: &FirstStage, threshold: f64) -> ThetaFull {
    let share = data.indicator(threshold).iter().filter(|&&b| b).count() as f64 / data.n() as f64;
    let mut beta1 = vec![0.0; data.k()];
    beta1[0] = std_normal_quantile(share.clamp(1e-6, 1.0 - 1e-6));
    ThetaFull {
        beta1,
        beta2: 0.0,
        gamma1: first.gamma1().to_vec(),
        gamma2: first.gamma2().to_vec(),
        rho: 0.0,
        sigma2_sq: first.sigma2_sq,
    }
}

/// Maximizes the likelihood at threshold `y`.
///
/// Without an explicit start, the three-step estimate mapped through the
/// parameter relations is used.
pub fn ml_fit(data: &Dataset, threshold: f64, start: Option<&ThetaFull>) -> Result<IvProbitMlFit> {
    let first = first_stage(data)?;
    ml_fit_with_first_stage(data, &first, threshold, start)
}

/// As [`ml_fit`], reusing an already computed first stage for start values.
pub fn ml_fit_with_first_stage(
    data: &Dataset,
    first: &FirstStage,
    threshold: f64,
    start: Option<&ThetaFull>,
) -> Result<IvProbitMlFit> {
    let indicator = data.indicator(threshold);
    let ones = indicator.iter().filter(|&&b| b).count();
    if ones == 0 {
        return Err(DrError::DegenerateOutcome { value: 0 });
    }
    if ones == data.n() {
        return Err(DrError::DegenerateOutcome { value: 1 });
    }
    if first.degenerate {
        return Err(DrError::DegenerateFirstStage);
    }
    let (k, l) = (data.k(), data.l());
    let start = match start {
        Some(s) => s.clone(),
        None => start_from_three_step(data, first, threshold),
    };
    let objective = |p: &[f64]| {
        let theta = ThetaFull::from_slice(p, k, l);
        ml_loglik(&theta, data, threshold).unwrap_or((f64::NAN, vec![f64::NAN; p.len()]))
    };
    let options = OptimOptions { max_iter: 500, ..OptimOptions::default() };
    let max = maximize_smooth(objective, &start.to_vec(), &ThetaFull::transforms(k, l), &options)?;

    let atanh_r = max.unconstrained[2 * k + 1 + l];
    if atanh_r.abs() > BOUNDARY_ATANH {
        return Err(DrError::BoundarySolution);
    }
    let theta = ThetaFull::from_slice(&max.argmax, k, l);
    let score_norm = max.gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
    let vcov = observed_information(&theta, data, threshold).and_then(|h| spd_inverse(&h));
    Ok(IvProbitMlFit {
        theta,
        loglik: max.value,
        converged: score_norm < SCORE_TOL,
        iterations: max.iterations,
        score_at_opt: max.gradient,
        vcov,
    })
}

/// Negative Hessian by central differences of the analytic score.
fn observed_information(theta: &ThetaFull, data: &Dataset, threshold: f64) -> Option<DMatrix<f64>> {
    let (k, l) = (data.k(), data.l());
    let p = theta.to_vec();
    let dim = p.len();
    let mut h = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let step = 1e-5 * p[j].abs().max(1.0) * if j >= dim - 2 { 0.1 } else { 1.0 };
        let mut pp = p.clone();
        pp[j] += step;
        let mut pm = p.clone();
        pm[j] -= step;
        let (_, gp) = ml_loglik(&ThetaFull::from_slice(&pp, k, l), data, threshold).ok()?;
        let (_, gm) = ml_loglik(&ThetaFull::from_slice(&pm, k, l), data, threshold).ok()?;
        for i in 0..dim {
            h[(i, j)] = -(gp[i] - gm[i]) / (2.0 * step);
        }
    }
    Some((&h + h.transpose()) * 0.5)
}

/// `Φ(x'β̂₁ + y₂β̂₂)`, with `x` including the intercept.
pub fn ml_cdf_at(fit: &IvProbitMlFit, x: &[f64], y2: f64) -> f64 {
    std_normal_cdf(dot(x, &fit.theta.beta1) + y2 * fit.theta.beta2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probit::{probit_fit, probit_loglik};
    use crate::simulation::{draw_dgp, DgpConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_theta(rng: &mut ChaCha8Rng, k: usize, l: usize) -> ThetaFull {
        let mut u = |a: f64| rng.random_range(-a..a);
        ThetaFull {
            beta1: (0..k).map(|_| u(1.0)).collect(),
            beta2: u(1.0),
            gamma1: (0..k).map(|_| u(1.5)).collect(),
            gamma2: (0..l).map(|_| u(1.5)).collect(),
            rho: u(0.9),
            sigma2_sq: 0.3 + u(1.0).abs() * 2.0,
        }
    }

    #[test]
    fn all_zero_indices() {
        let d = Dataset::from_columns(
            vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 1e-300],
            &[vec![0.5, -0.2, 0.1, 0.3, -0.4, 0.0]],
            &[vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]],
        )
        .unwrap();
        let theta = ThetaFull {
            beta1: vec![0.0, 0.0],
            beta2: 0.0,
            gamma1: vec![0.0, 0.0],
            gamma2: vec![0.0],
            rho: 0.0,
            sigma2_sq: 1.0,
        };
        let (v, _) = ml_loglik(&theta, &d, 0.5).unwrap();
        let expected = 6.0 * (0.5f64.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln());
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = draw_dgp(&DgpConfig { rho: 0.5, n: 200, censor_at: 2.0, seed: 3 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let theta = random_theta(&mut rng, 2, 1);
            let (_, g) = ml_loglik(&theta, &d, 3.0).unwrap();
            let p = theta.to_vec();
            for j in 0..p.len() {
                let h = 1e-6;
                let mut pp = p.clone();
                pp[j] += h;
                let mut pm = p.clone();
                pm[j] -= h;
                let fp = ml_loglik(&ThetaFull::from_slice(&pp, 2, 1), &d, 3.0).unwrap().0;
                let fm = ml_loglik(&ThetaFull::from_slice(&pm, 2, 1), &d, 3.0).unwrap().0;
                let fd = (fp - fm) / (2.0 * h);
                assert!((fd - g[j]).abs() / g[j].abs().max(1.0) < 1e-6, "coord {j}: {fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn factorizes_when_uncorrelated() {
        let d = draw_dgp(&DgpConfig { rho: 0.3, n: 150, censor_at: 2.0, seed: 9 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut theta = random_theta(&mut rng, 2, 1);
        theta.rho = 0.0;
        let (v, _) = ml_loglik(&theta, &d, 3.5).unwrap();
        let mut coef = theta.beta1.clone();
        coef.push(theta.beta2);
        let (probit, _) = probit_loglik(&d.structural_design(), &d.indicator(3.5), &coef);
        let mut gamma = theta.gamma1.clone();
        gamma.extend_from_slice(&theta.gamma2);
        let fitted = d.first_stage_design().mul_vec(&gamma);
        let regression: f64 = d
            .endogenous()
            .iter()
            .zip(&fitted)
            .map(|(y, f)| {
                -0.5 * (2.0 * std::f64::consts::PI * theta.sigma2_sq).ln()
                    - (y - f).powi(2) / (2.0 * theta.sigma2_sq)
            })
            .sum();
        assert!((v - (probit + regression)).abs() < 1e-10);
    }

    #[test]
    fn order_invariant() {
        let d = draw_dgp(&DgpConfig { rho: 0.3, n: 100, censor_at: 2.0, seed: 12 }).unwrap();
        let idx: Vec<usize> = (0..100).rev().collect();
        let dr = d.resample(&idx);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let theta = random_theta(&mut rng, 2, 1);
        let (a, _) = ml_loglik(&theta, &d, 3.0).unwrap();
        let (b, _) = ml_loglik(&theta, &dr, 3.0).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn rejects_boundary_correlation() {
        let d = draw_dgp(&DgpConfig { rho: 0.3, n: 50, censor_at: 2.0, seed: 12 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut theta = random_theta(&mut rng, 2, 1);
        theta.rho = 1.0;
        assert!(matches!(ml_loglik(&theta, &d, 3.0), Err(DrError::NonFinite(_))));
    }

    #[test]
    fn tilde_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let theta = random_theta(&mut rng, 2, 1);
        let back = ThetaFull::from_tilde(&theta.tilde(), &theta.gamma1, &theta.gamma2, theta.sigma2_sq);
        for (a, b) in theta.to_vec().iter().zip(back.to_vec()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn recovers_simulation_truth() {
        let d = draw_dgp(&DgpConfig { rho: 0.7, n: 4000, censor_at: 2.0, seed: 31 }).unwrap();
        let fit = ml_fit(&d, 3.0, None).unwrap();
        assert!(fit.converged);
        let se = fit.std_errors().unwrap();
        // Latent index y - 1 - x - y₂: β₁ = (2, -1), β₂ = -1, corr(-U, V) = -0.7.
        assert!((fit.theta.beta2 + 1.0).abs() < 3.0 * se[2], "{:?}", fit.theta);
        assert!((fit.theta.gamma1[0] - 1.0).abs() < 3.0 * se[3]);
        assert!((fit.theta.gamma1[1] - 1.0).abs() < 3.0 * se[4]);
        assert!((fit.theta.gamma2[0] - 1.0).abs() < 3.0 * se[5]);
        assert!((fit.theta.rho + 0.7).abs() < 3.0 * se[6]);
        let f = ml_cdf_at(&fit, &[1.0, 1.0], 1.0);
        assert!((f - 0.5).abs() < 0.02, "{f}");
    }

    #[test]
    fn warm_start_at_truth_converges_fast() {
        let d = draw_dgp(&DgpConfig { rho: 0.7, n: 4000, censor_at: 2.0, seed: 32 }).unwrap();
        let truth = ThetaFull {
            beta1: vec![2.0, -1.0],
            beta2: -1.0,
            gamma1: vec![1.0, 1.0],
            gamma2: vec![1.0],
            rho: -0.7,
            sigma2_sq: 1.0,
        };
        let fit = ml_fit(&d, 3.0, Some(&truth)).unwrap();
        assert!(fit.converged);
        assert!(fit.iterations < 25, "{} iterations", fit.iterations);
    }

    #[test]
    fn agrees_with_probit_under_exogeneity() {
        let d = draw_dgp(&DgpConfig { rho: 0.0, n: 4000, censor_at: 2.0, seed: 33 }).unwrap();
        let fit = ml_fit(&d, 3.5, None).unwrap();
        let se = fit.std_errors().unwrap();
        assert!(fit.theta.rho.abs() < 3.0 * se[6]);
        let pf = probit_fit(&d.structural_design(), &d.indicator(3.5)).unwrap();
        let pse = pf.std_errors();
        for j in 0..3 {
            let ml = if j < 2 { fit.theta.beta1[j] } else { fit.theta.beta2 };
            assert!((ml - pf.coefficients[j]).abs() < 3.0 * se[j].max(pse[j]));
        }
    }

    #[test]
    fn instrument_rescaling_equivariance() {
        let d = draw_dgp(&DgpConfig { rho: 0.5, n: 1000, censor_at: 2.0, seed: 34 }).unwrap();
        let a = ml_fit(&d, 3.2, None).unwrap();
        let b = ml_fit(&d.with_scaled_instrument(0, 2.5), 3.2, None).unwrap();
        assert!((a.theta.gamma2[0] / 2.5 - b.theta.gamma2[0]).abs() < 1e-6);
        assert!((a.loglik - b.loglik).abs() < 1e-6);
        assert!((a.theta.rho - b.theta.rho).abs() < 1e-6);
        assert!((a.theta.sigma2_sq - b.theta.sigma2_sq).abs() < 1e-6);
        assert!((a.theta.beta2 - b.theta.beta2).abs() < 1e-6);
        for j in 0..2 {
            assert!((a.theta.beta1[j] - b.theta.beta1[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn matches_two_step_when_just_identified() {
        let d = draw_dgp(&DgpConfig { rho: 0.7, n: 4000, censor_at: 2.0, seed: 35 }).unwrap();
        let fs = first_stage(&d).unwrap();
        let two_step = second_stage(&d, &fs.residuals, 3.4).unwrap();
        let fit = ml_fit(&d, 3.4, None).unwrap();
        let ml = fit.theta.tilde();
        for (a, b) in two_step.beta1_tilde.iter().zip(&ml.beta1_tilde) {
            assert!((a - b).abs() < 1e-3);
        }
        assert!((two_step.beta2_tilde - ml.beta2_tilde).abs() < 1e-3);
        assert!((two_step.rho_tilde - ml.rho_tilde).abs() < 1e-3);
    }

    #[test]
    fn cdf_limits() {
        let fit = IvProbitMlFit {
            theta: ThetaFull {
                beta1: vec![0.0, 0.0],
                beta2: 0.0,
                gamma1: vec![0.0; 2],
                gamma2: vec![0.0],
                rho: 0.0,
                sigma2_sq: 1.0,
            },
            loglik: 0.0,
            converged: true,
            iterations: 0,
            score_at_opt: vec![],
            vcov: None,
        };
        assert_eq!(ml_cdf_at(&fit, &[1.0, 3.0], -7.0), 0.5);
        let mut steep = fit.clone();
        steep.theta.beta2 = 4.0;
        assert!(ml_cdf_at(&steep, &[1.0, 0.0], 1e6) == 1.0);
        let mut prev = 0.0;
        for i in 0..50 {
            let v = ml_cdf_at(&steep, &[1.0, 0.0], -2.0 + 0.1 * i as f64);
            assert!(v >= prev);
            prev = v;
        }
    }
}
