//! Exogenous probit by maximum likelihood.
//!
//! This is the baseline estimator for distribution regression that ignores
//! endogeneity, and the workhorse of the control-function second stage.

use nalgebra::{DMatrix, DVector};

use crate::error::{DrError, Result};
use crate::numerics::{dot, log_cdf_and_hazard, ols, std_normal_quantile, DesignMatrix};

/// Coefficient norm beyond which the fit is abandoned as separated.
pub const SEPARATION_NORM: f64 = 1e3;
const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbitFit {
    pub coefficients: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Inverse observed information at the returned coefficients.
    pub vcov: DMatrix<f64>,
}

impl ProbitFit {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.coefficients.len()).map(|j| self.vcov[(j, j)].max(0.0).sqrt()).collect()
    }
}

/// Probit log-likelihood and its score at `coef`.
pub fn probit_loglik(design: &DesignMatrix, indicator: &[bool], coef: &[f64]) -> (f64, Vec<f64>) {
    let p = design.ncols();
    let mut ll = 0.0;
    let mut grad = vec![0.0; p];
    for (i, &hit) in indicator.iter().enumerate() {
        let row = design.row(i);
        let sign = if hit { 1.0 } else { -1.0 };
        let (l, h) = log_cdf_and_hazard(sign * dot(row, coef));
        ll += l;
        let a = sign * h;
        for (g, x) in grad.iter_mut().zip(row) {
            *g += a * x;
        }
    }
    (ll, grad)
}

fn loglik_only(design: &DesignMatrix, indicator: &[bool], coef: &[f64]) -> f64 {
    indicator
        .iter()
        .enumerate()
        .map(|(i, &hit)| {
            let m = dot(design.row(i), coef);
            log_cdf_and_hazard(if hit { m } else { -m }).0
        })
        .sum()
}

/// Value, score and observed information in a single pass.
fn loglik_with_information(
    design: &DesignMatrix,
    indicator: &[bool],
    coef: &[f64],
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let p = design.ncols();
    let mut ll = 0.0;
    let mut grad = DVector::zeros(p);
    let mut info = DMatrix::zeros(p, p);
    for (i, &hit) in indicator.iter().enumerate() {
        let row = design.row(i);
        let sign = if hit { 1.0 } else { -1.0 };
        let q = sign * dot(row, coef);
        let (l, h) = log_cdf_and_hazard(q);
        ll += l;
        let a = sign * h;
        // -d²/dm² log Φ(s m) = λ(q) (q + λ(q))
        let w = h * (q + h);
        for j in 0..p {
            grad[j] += a * row[j];
            let wx = w * row[j];
            for k in j..p {
                info[(j, k)] += wx * row[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            info[(j, k)] = info[(k, j)];
        }
    }
    (ll, grad, info)
}

fn intercept_column(design: &DesignMatrix) -> Option<usize> {
    (0..design.ncols()).find(|&j| (0..design.nrows()).all(|i| design.get(i, j) == 1.0))
}

fn check_rank(design: &DesignMatrix) -> Result<()> {
    let zeros = vec![0.0; design.nrows()];
    ols(design, &zeros).map(|_| ())
}

/// Fits `P(I = 1 | x) = Φ(x'b)` by Newton-Raphson with step halving.
///
/// The start is the zero vector with the intercept (if any column is all
/// ones) set to `Φ⁻¹(mean(I))`. Separation is reported through
/// [`DrError::SeparationSuspected`], never penalized away.
pub fn probit_fit(design: &DesignMatrix, indicator: &[bool]) -> Result<ProbitFit> {
    let n = design.nrows();
    if indicator.len() != n {
        return Err(DrError::InvalidInput("indicator length differs from design rows".into()));
    }
    let ones = indicator.iter().filter(|&&b| b).count();
    if ones == 0 {
        return Err(DrError::DegenerateOutcome { value: 0 });
    }
    if ones == n {
        return Err(DrError::DegenerateOutcome { value: 1 });
    }
    let p = design.ncols();
    let mut coef = vec![0.0; p];
    if let Some(j) = intercept_column(design) {
        coef[j] = std_normal_quantile(ones as f64 / n as f64);
    }

    let mut iterations = 0;
    let mut converged = false;
    let (mut ll, mut grad, mut info) = loglik_with_information(design, indicator, &coef);
    loop {
        if grad.norm() < GRAD_TOL {
            converged = true;
            break;
        }
        if iterations >= MAX_ITER {
            break;
        }
        let Some(chol) = info.clone().cholesky() else {
            check_rank(design)?;
            return Err(DrError::SeparationSuspected);
        };
        let step = chol.solve(&grad);
        let slack = 1e-12 * (1.0 + ll.abs());
        let mut t = 1.0;
        let mut trial: Vec<f64>;
        loop {
            trial = coef.iter().zip(step.iter()).map(|(c, s)| c + t * s).collect();
            let value = loglik_only(design, indicator, &trial);
            if value.is_finite() && value >= ll - slack {
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                break;
            }
        }
        iterations += 1;
        if t < 1e-12 {
            // No ascent possible along the Newton direction: numerically at the optimum.
            converged = grad.norm() < 1e-6 * (1.0 + ll.abs());
            break;
        }
        coef = trial;
        if coef.iter().map(|c| c * c).sum::<f64>().sqrt() > SEPARATION_NORM {
            return Err(DrError::SeparationSuspected);
        }
        (ll, grad, info) = loglik_with_information(design, indicator, &coef);
    }
    let vcov = match info.clone().cholesky() {
        Some(c) => c.inverse(),
        None => {
            check_rank(design)?;
            return Err(DrError::SeparationSuspected);
        }
    };
    Ok(ProbitFit { coefficients: coef, loglik: ll, converged, iterations, vcov })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::std_normal_cdf;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn simulated(n: usize, seed: u64) -> (DesignMatrix, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(n);
        let mut ind = Vec::with_capacity(n);
        for _ in 0..n {
            let xi: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.sample(StandardNormal);
            x.push(xi);
            ind.push(0.5 + xi >= u);
        }
        (DesignMatrix::from_columns(&[vec![1.0; n], x]).unwrap(), ind)
    }

    #[test]
    fn intercept_only_equals_normal_quantile_of_mean() {
        let d = DesignMatrix::new(4, 1, vec![1.0; 4]).unwrap();
        let fit = probit_fit(&d, &[true, true, false, true]).unwrap();
        // Oracle: bisection on Φ(b) = 0.75.
        let (mut lo, mut hi) = (-5.0, 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if std_normal_cdf(mid) < 0.75 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((fit.coefficients[0] - 0.5 * (lo + hi)).abs() < 1e-10);
        assert!((fit.coefficients[0] - 0.6745).abs() < 1e-4);
    }

    #[test]
    fn degenerate_outcomes() {
        let d = DesignMatrix::new(3, 1, vec![1.0; 3]).unwrap();
        assert_eq!(probit_fit(&d, &[true; 3]), Err(DrError::DegenerateOutcome { value: 1 }));
        assert_eq!(probit_fit(&d, &[false; 3]), Err(DrError::DegenerateOutcome { value: 0 }));
    }

    #[test]
    fn consistent_on_simulated_data() {
        let (d, ind) = simulated(10_000, 42);
        let fit = probit_fit(&d, &ind).unwrap();
        assert!(fit.converged);
        let se = fit.std_errors();
        assert!((fit.coefficients[0] - 0.5).abs() < 3.0 * se[0]);
        assert!((fit.coefficients[1] - 1.0).abs() < 3.0 * se[1]);
        assert!(fit.loglik <= 0.0);
    }

    #[test]
    fn score_matches_finite_differences() {
        let (d, ind) = simulated(300, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let b = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
            let (_, g) = probit_loglik(&d, &ind, &b);
            for j in 0..2 {
                let h = 1e-6;
                let mut bp = b;
                bp[j] += h;
                let mut bm = b;
                bm[j] -= h;
                let fd = (probit_loglik(&d, &ind, &bp).0 - probit_loglik(&d, &ind, &bm).0) / (2.0 * h);
                assert!((fd - g[j]).abs() / g[j].abs().max(1.0) < 1e-5, "{fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn permutation_invariance_and_first_order_condition() {
        let (d, ind) = simulated(500, 8);
        let fit = probit_fit(&d, &ind).unwrap();
        let mut idx: Vec<usize> = (0..500).rev().collect();
        idx.rotate_left(123);
        let dp = d.select_rows(&idx);
        let ip: Vec<bool> = idx.iter().map(|&i| ind[i]).collect();
        let fit_p = probit_fit(&dp, &ip).unwrap();
        for (a, b) in fit.coefficients.iter().zip(&fit_p.coefficients) {
            assert!((a - b).abs() < 1e-10);
        }
        let mean_fit: f64 =
            (0..500).map(|i| std_normal_cdf(dot(d.row(i), &fit.coefficients))).sum::<f64>() / 500.0;
        let mean_ind = ind.iter().filter(|&&b| b).count() as f64 / 500.0;
        // The probit first-order condition zeroes the sum of generalized
        // residuals; raw residuals only average out approximately.
        let (_, score) = probit_loglik(&d, &ind, &fit.coefficients);
        assert!(score[0].abs() < 1e-8);
        assert!((mean_fit - mean_ind).abs() < 1e-2);
    }

    #[test]
    fn separated_data_flagged() {
        let d = DesignMatrix::from_columns(&[vec![1.0; 6], vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]])
            .unwrap();
        let ind = [false, false, false, true, true, true];
        match probit_fit(&d, &ind) {
            Err(DrError::SeparationSuspected) => {}
            Ok(fit) => assert!(fit.coefficients[1] > 5.0),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn collinear_design_rank_deficient() {
        let d = DesignMatrix::from_columns(&[vec![1.0; 6], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0]])
            .unwrap();
        let ind = [false, true, false, true, false, true];
        assert_eq!(probit_fit(&d, &ind).unwrap_err(), DrError::RankDeficient);
    }
}
