//! Link functions, least squares and the smooth optimizer shared by all estimators.

mod linalg;
mod normal;
mod optimize;

pub use linalg::{dot, ols, spd_inverse, DesignMatrix, OlsFit, RANK_TOL};
pub use normal::{
    log_cdf_and_hazard, log_std_normal_cdf, std_normal_cdf, std_normal_pdf, std_normal_quantile,
};
pub use optimize::{
    maximize_smooth, HessianInit, Maximum, OptimOptions, ParamTransform, Termination,
};
