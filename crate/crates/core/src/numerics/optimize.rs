//! Quasi-Newton maximization of smooth objectives with constrained
//! coordinates mapped onto the real line.

use nalgebra::{DMatrix, DVector};

use crate::error::{DrError, Result};

/// Per-coordinate map from an unconstrained value `u` to the parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamTransform {
    /// `θ = u`
    Free,
    /// `θ = tanh(u)`, onto `(-1, 1)`
    Correlation,
    /// `θ = exp(u)`, onto `(0, ∞)`
    Positive,
}

impl ParamTransform {
    pub fn to_unconstrained(self, theta: f64) -> Result<f64> {
        match self {
            ParamTransform::Free => Ok(theta),
            ParamTransform::Correlation if theta.abs() < 1.0 => Ok(theta.atanh()),
            ParamTransform::Positive if theta > 0.0 => Ok(theta.ln()),
            _ => Err(DrError::InvalidInput(format!(
                "start value {theta} violates constraint {self:?}"
            ))),
        }
    }

    #[inline]
    pub fn to_constrained(self, u: f64) -> f64 {
        match self {
            ParamTransform::Free => u,
            ParamTransform::Correlation => u.tanh(),
            ParamTransform::Positive => u.exp(),
        }
    }

    /// `dθ/du` evaluated at the constrained value `θ`.
    #[inline]
    fn jacobian(self, theta: f64) -> f64 {
        match self {
            ParamTransform::Free => 1.0,
            ParamTransform::Correlation => 1.0 - theta * theta,
            ParamTransform::Positive => theta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianInit {
    /// Scaled identity after the first step.
    Identity,
    /// Finite differences of the analytic gradient at the start point.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy)]
pub struct OptimOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub hessian_init: HessianInit,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self { max_iter: 500, grad_tol: 1e-8, hessian_init: HessianInit::FiniteDifference }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    IterationLimit,
    LineSearchStalled,
    /// A trial point was non-finite and no finite point could be found along the search direction.
    NonFiniteObjective,
}

#[derive(Debug, Clone)]
pub struct Maximum {
    /// Maximizer in the constrained parameterization.
    pub argmax: Vec<f64>,
    /// Same point in the unconstrained coordinates.
    pub unconstrained: Vec<f64>,
    pub value: f64,
    /// Gradient with respect to the unconstrained coordinates.
    pub gradient: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub termination: Termination,
}

/// Objective in the unconstrained space, negated for minimization.
struct Transformed<'a, F> {
    objective: F,
    transforms: &'a [ParamTransform],
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> Transformed<'_, F> {
    fn eval(&mut self, u: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let theta: Vec<f64> =
            u.iter().zip(self.transforms).map(|(&ui, t)| t.to_constrained(ui)).collect();
        let (value, grad) = (self.objective)(&theta);
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return None;
        }
        let g = DVector::from_iterator(
            u.len(),
            grad.iter()
                .zip(&theta)
                .zip(self.transforms)
                .map(|((g, th), t)| -g * t.jacobian(*th)),
        );
        Some((-value, g))
    }
}

/// Maximizes `objective` (returning value and gradient in the constrained
/// parameterization) with BFGS and a strong-Wolfe line search using cubic
/// interpolation.
///
/// Fails with [`DrError::NonFiniteObjective`] only if the start point itself
/// evaluates to a non-finite value; later non-finite trial points end the
/// run with the last valid iterate and `converged == false`.
pub fn maximize_smooth<F>(
    objective: F,
    start: &[f64],
    transforms: &[ParamTransform],
    options: &OptimOptions,
) -> Result<Maximum>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    if start.len() != transforms.len() {
        return Err(DrError::InvalidInput("start and transform lengths differ".into()));
    }
    let dim = start.len();
    let u0: Vec<f64> = start
        .iter()
        .zip(transforms)
        .map(|(&s, t)| t.to_unconstrained(s))
        .collect::<Result<_>>()?;
    let mut obj = Transformed { objective, transforms };
    let mut x = DVector::from_vec(u0);
    let (mut fx, mut gx) = obj.eval(&x).ok_or(DrError::NonFiniteObjective)?;

    let mut hinv = match options.hessian_init {
        HessianInit::FiniteDifference => fd_inverse_hessian(&mut obj, &x),
        HessianInit::Identity => None,
    };
    let mut scale_identity = hinv.is_none();
    if hinv.is_none() {
        hinv = Some(DMatrix::identity(dim, dim));
    }
    let mut hinv = hinv.unwrap();

    let mut iterations = 0;
    let mut termination = Termination::IterationLimit;
    let mut reset_used = false;

    while iterations < options.max_iter {
        if gx.norm() < options.grad_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        let mut d = -(&hinv * &gx);
        let mut slope = d.dot(&gx);
        if slope >= 0.0 {
            hinv = DMatrix::identity(dim, dim);
            scale_identity = true;
            d = -gx.clone();
            slope = d.dot(&gx);
        }
        let step = match line_search(&mut obj, &x, fx, &d, slope) {
            LineOutcome::Accepted(step) => step,
            failure => {
                if !reset_used {
                    reset_used = true;
                    hinv = DMatrix::identity(dim, dim);
                    scale_identity = true;
                    continue;
                }
                termination = if matches!(failure, LineOutcome::NonFinite) {
                    Termination::NonFiniteObjective
                } else {
                    Termination::LineSearchStalled
                };
                break;
            }
        };
        iterations += 1;
        reset_used = false;
        let (alpha, f_new, g_new) = step;
        let s = &d * alpha;
        let yv = &g_new - &gx;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            if scale_identity {
                hinv = DMatrix::identity(dim, dim) * (sy / yv.dot(&yv));
                scale_identity = false;
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &yv;
            let yhy = yv.dot(&hy);
            // H+ = H - ρ(s hyᵀ + hy sᵀ) + (ρ² yᵀHy + ρ) s sᵀ
            hinv -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        x += s;
        fx = f_new;
        gx = g_new;
    }
    if termination == Termination::IterationLimit && gx.norm() < options.grad_tol {
        termination = Termination::GradientTolerance;
    }

    let argmax = x.iter().zip(transforms).map(|(&u, t)| t.to_constrained(u)).collect();
    Ok(Maximum {
        argmax,
        unconstrained: x.iter().copied().collect(),
        value: -fx,
        gradient: gx.iter().map(|g| -g).collect(),
        converged: termination == Termination::GradientTolerance,
        iterations,
        termination,
    })
}

fn fd_inverse_hessian<F: FnMut(&[f64]) -> (f64, Vec<f64>)>(
    obj: &mut Transformed<'_, F>,
    x: &DVector<f64>,
) -> Option<DMatrix<f64>> {
    let dim = x.len();
    let mut h = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let step = 1e-5 * x[j].abs().max(1.0);
        let mut xp = x.clone();
        xp[j] += step;
        let mut xm = x.clone();
        xm[j] -= step;
        let (_, gp) = obj.eval(&xp)?;
        let (_, gm) = obj.eval(&xm)?;
        let col = (gp - gm) / (2.0 * step);
        h.set_column(j, &col);
    }
    let sym = (&h + h.transpose()) * 0.5;
    sym.cholesky().map(|c| c.inverse())
}

enum LineOutcome {
    Accepted((f64, f64, DVector<f64>)),
    Failed,
    NonFinite,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_EVALS: usize = 60;

/// Strong Wolfe line search (bracketing then zoom). The sufficient-decrease
/// test carries a small absolute slack so that steps remain acceptable once
/// function differences fall below rounding noise.
fn line_search<F: FnMut(&[f64]) -> (f64, Vec<f64>)>(
    obj: &mut Transformed<'_, F>,
    x: &DVector<f64>,
    f0: f64,
    d: &DVector<f64>,
    slope0: f64,
) -> LineOutcome {
    let slack = 1e-12 * (1.0 + f0.abs());
    let armijo = |alpha: f64, f: f64| f <= f0 + C1 * alpha * slope0 + slack;
    let curvature = |slope: f64| slope.abs() <= -C2 * slope0;

    let mut evals = 0;
    let mut eval_at = |alpha: f64, evals: &mut usize| {
        *evals += 1;
        let xt = x + d * alpha;
        obj.eval(&xt).map(|(f, g)| {
            let s = g.dot(d);
            (f, g, s)
        })
    };

    // Bracketing phase; non-finite trial points shrink the step.
    let mut alpha_prev = 0.0;
    let mut f_prev = f0;
    let mut slope_prev = slope0;
    let mut alpha = 1.0;
    let mut saw_non_finite = false;
    loop {
        if evals >= MAX_LINE_EVALS {
            return if saw_non_finite { LineOutcome::NonFinite } else { LineOutcome::Failed };
        }
        let Some((f, g, slope)) = eval_at(alpha, &mut evals) else {
            saw_non_finite = true;
            alpha = alpha_prev + 0.5 * (alpha - alpha_prev);
            if alpha - alpha_prev < 1e-16 {
                return LineOutcome::NonFinite;
            }
            continue;
        };
        if !armijo(alpha, f) || (alpha_prev > 0.0 && f >= f_prev) {
            return zoom(
                &mut eval_at,
                &mut evals,
                (alpha_prev, f_prev, slope_prev),
                (alpha, f, slope),
                &armijo,
                &curvature,
            );
        }
        if curvature(slope) {
            return LineOutcome::Accepted((alpha, f, g));
        }
        if slope >= 0.0 {
            return zoom(
                &mut eval_at,
                &mut evals,
                (alpha, f, slope),
                (alpha_prev, f_prev, slope_prev),
                &armijo,
                &curvature,
            );
        }
        alpha_prev = alpha;
        f_prev = f;
        slope_prev = slope;
        alpha *= 2.0;
        if saw_non_finite {
            // Do not expand back into the region that produced non-finite values.
            return LineOutcome::Accepted((alpha_prev, f, g));
        }
    }
}

fn cubic_minimizer(a: (f64, f64, f64), b: (f64, f64, f64)) -> Option<f64> {
    let (xa, fa, da) = a;
    let (xb, fb, db) = b;
    let d1 = da + db - 3.0 * (fa - fb) / (xa - xb);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return None;
    }
    let d2 = (xb - xa).signum() * disc.sqrt();
    let t = xb - (xb - xa) * (db + d2 - d1) / (db - da + 2.0 * d2);
    t.is_finite().then_some(t)
}

#[allow(clippy::type_complexity)]
fn zoom<E>(
    eval_at: &mut E,
    evals: &mut usize,
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
    armijo: &dyn Fn(f64, f64) -> bool,
    curvature: &dyn Fn(f64) -> bool,
) -> LineOutcome
where
    E: FnMut(f64, &mut usize) -> Option<(f64, DVector<f64>, f64)>,
{
    loop {
        if *evals >= MAX_LINE_EVALS || (hi.0 - lo.0).abs() < 1e-16 * lo.0.abs().max(1.0) {
            return LineOutcome::Failed;
        }
        let (left, right) = if lo.0 < hi.0 { (lo.0, hi.0) } else { (hi.0, lo.0) };
        let width = right - left;
        let mut alpha = cubic_minimizer(lo, hi).unwrap_or(0.5 * (left + right));
        // Keep the trial point safely inside the bracket.
        if alpha < left + 0.1 * width || alpha > right - 0.1 * width {
            alpha = 0.5 * (left + right);
        }
        let Some((f, g, slope)) = eval_at(alpha, evals) else {
            // No finite value here: shrink the bracket towards `lo`.
            hi = (alpha, lo.1 + 1.0, lo.2);
            continue;
        };
        if !armijo(alpha, f) || f >= lo.1 {
            hi = (alpha, f, slope);
        } else {
            if curvature(slope) {
                return LineOutcome::Accepted((alpha, f, g));
            }
            if slope * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (alpha, f, slope);
        }
    }
}
