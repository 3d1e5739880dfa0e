//! Distribution regression with a continuous endogenous regressor.
//!
//! Conditional CDFs `F(y | x, y₂)` are estimated threshold by threshold,
//! either by exogenous probit, by full-information IV-probit maximum
//! likelihood, or by a control-function estimator that integrates the
//! first-stage residual out. Estimated curves are monotonized by
//! rearrangement or isotonic regression, inverted to quantiles, and
//! bootstrapped for pointwise bands.

pub mod cli;
pub mod dataio;
pub mod dataset;
pub mod driver;
pub mod error;
pub mod inference;
pub mod ivprobit_ml;
pub mod linear;
pub mod monotone;
pub mod numerics;
pub mod probit;
pub mod simulation;
pub mod three_step;

pub use dataset::{Dataset, EvalPoint};
pub use driver::{fit_curve, CdfCurve, Estimator, Recipe, ThresholdGrid};
pub use error::{DrError, Result};
pub use monotone::{MonotoneCurve, Monotonizer};
