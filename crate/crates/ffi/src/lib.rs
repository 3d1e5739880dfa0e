//! C ABI for `ivdr`.
//!
//! Objects are opaque handles created by `ivdr_*_new`/`ivdr_fit_*` and released
//! with the matching `ivdr_*_free`. Every fallible call returns an `IVDR_*`
//! status code; on failure `ivdr_last_error_message` describes the error for
//! the calling thread. Matrices are column-major with `n` rows.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ivdr::driver::{CdfCurve, Estimator, Recipe, ThresholdGrid};
use ivdr::inference::{bootstrap_bands, difference_bands, BandResult};
use ivdr::monotone::{default_levels, Monotonizer};
use ivdr::simulation::{draw_dgp, true_cdf_censored, DgpConfig};
use ivdr::{Dataset, DrError, EvalPoint};

pub const IVDR_OK: i32 = 0;
pub const IVDR_ERR_NULL_POINTER: i32 = 1;
pub const IVDR_ERR_INVALID_ARGUMENT: i32 = 2;
pub const IVDR_ERR_RANK_DEFICIENT: i32 = 3;
pub const IVDR_ERR_DEGENERATE: i32 = 4;
pub const IVDR_ERR_SEPARATION: i32 = 5;
pub const IVDR_ERR_BOUNDARY: i32 = 6;
pub const IVDR_ERR_NON_FINITE: i32 = 7;
pub const IVDR_ERR_NOT_CONVERGED: i32 = 8;
pub const IVDR_ERR_BOOTSTRAP: i32 = 9;
pub const IVDR_ERR_IO: i32 = 10;
pub const IVDR_ERR_DATA: i32 = 11;
pub const IVDR_ERR_PANIC: i32 = 99;

pub const IVDR_ESTIMATOR_PROBIT: i32 = 0;
pub const IVDR_ESTIMATOR_IV_ML: i32 = 1;
pub const IVDR_ESTIMATOR_THREE_STEP: i32 = 2;

/// Clamps to `[0, 1]` without reordering.
pub const IVDR_MONOTONIZE_NONE: i32 = 0;
pub const IVDR_MONOTONIZE_ISOTONIC: i32 = 1;
pub const IVDR_MONOTONIZE_REARRANGE: i32 = 2;

/// Sample `(Y, Y2, X, Z)`; the intercept is added internally.
pub struct IvdrDataset(Dataset);

/// A CDF curve on a threshold grid.
pub struct IvdrCurve {
    grid: Vec<f64>,
    values: Vec<f64>,
}

/// Pointwise bootstrap band.
pub struct IvdrBand(BandResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code_for(err: &DrError) -> i32 {
    match err {
        DrError::RankDeficient => IVDR_ERR_RANK_DEFICIENT,
        DrError::DegenerateOutcome { .. } | DrError::DegenerateFirstStage | DrError::CurveFailed => {
            IVDR_ERR_DEGENERATE
        }
        DrError::SeparationSuspected => IVDR_ERR_SEPARATION,
        DrError::BoundarySolution => IVDR_ERR_BOUNDARY,
        DrError::NonFiniteObjective | DrError::NonFinite(_) => IVDR_ERR_NON_FINITE,
        DrError::NotConverged { .. } => IVDR_ERR_NOT_CONVERGED,
        DrError::ReplicateFailure { .. } => IVDR_ERR_BOOTSTRAP,
        DrError::Io(_) => IVDR_ERR_IO,
        DrError::MissingColumn(_) | DrError::EmptyAfterFiltering | DrError::NonNumeric { .. } => IVDR_ERR_DATA,
        DrError::InvalidInput(_) => IVDR_ERR_INVALID_ARGUMENT,
    }
}

struct Failure(i32, String);

impl From<DrError> for Failure {
    fn from(e: DrError) -> Self {
        Failure(code_for(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(IVDR_ERR_NULL_POINTER, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(IVDR_ERR_INVALID_ARGUMENT, msg.into())
}

/// Runs `f`, records any error and converts panics into `IVDR_ERR_PANIC`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IVDR_OK,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            IVDR_ERR_PANIC
        }
    }
}

/// # Safety
/// `ptr` must be null or point to `len` readable values.
unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be null or point to `len` writable values.
unsafe fn write_out(ptr: *mut f64, len: usize, src: &[f64], what: &str) -> Result<(), Failure> {
    if len < src.len() {
        return Err(invalid(format!("`{what}` holds {len} values, need {}", src.len())));
    }
    if src.is_empty() {
        return Ok(());
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), ptr, src.len());
    Ok(())
}

unsafe fn columns(ptr: *const f64, n: usize, ncols: usize, what: &str) -> Result<Vec<Vec<f64>>, Failure> {
    let all = slice(ptr, n * ncols, what)?;
    Ok(all.chunks(n.max(1)).take(ncols).map(<[f64]>::to_vec).collect())
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(what))
}

fn store<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers check `out` for null before computing `value`.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

fn estimator(code: i32) -> Result<Estimator, Failure> {
    match code {
        IVDR_ESTIMATOR_PROBIT => Ok(Estimator::Probit),
        IVDR_ESTIMATOR_IV_ML => Ok(Estimator::IvMl),
        IVDR_ESTIMATOR_THREE_STEP => Ok(Estimator::ThreeStep),
        other => Err(invalid(format!("unknown estimator code {other}"))),
    }
}

fn monotonizer(code: i32) -> Result<Monotonizer, Failure> {
    match code {
        IVDR_MONOTONIZE_NONE => Ok(Monotonizer::None),
        IVDR_MONOTONIZE_ISOTONIC => Ok(Monotonizer::Isotonic),
        IVDR_MONOTONIZE_REARRANGE => Ok(Monotonizer::Rearrange),
        other => Err(invalid(format!("unknown monotonizer code {other}"))),
    }
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ivdr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a dataset from `n` observations. `x` holds `k` exogenous columns
/// without the intercept and `z` holds `l >= 1` instruments.
///
/// # Safety
/// Array arguments must point to `n`, `n`, `n * k` and `n * l` values; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn ivdr_dataset_new(
    n: usize,
    y: *const f64,
    y2: *const f64,
    x: *const f64,
    k: usize,
    z: *const f64,
    l: usize,
    out: *mut *mut IvdrDataset,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let y = slice(y, n, "y")?.to_vec();
        let y2 = slice(y2, n, "y2")?.to_vec();
        let xs = columns(x, n, k, "x")?;
        let zs = columns(z, n, l, "z")?;
        store(out, IvdrDataset(Dataset::from_columns(y, y2, &xs, &zs)?));
        Ok(())
    })
}

/// Draws the simulation design with one exogenous regressor and one
/// instrument; outcomes below `censor_at` are set to `censor_at`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ivdr_dataset_simulate(
    rho: f64,
    n: usize,
    censor_at: f64,
    seed: u64,
    out: *mut *mut IvdrDataset,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        store(out, IvdrDataset(draw_dgp(&DgpConfig { rho, n, censor_at, seed })?));
        Ok(())
    })
}

/// Number of observations, or 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn ivdr_dataset_len(data: *const IvdrDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.n())
}

/// # Safety
/// `data` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ivdr_dataset_free(data: *mut IvdrDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

unsafe fn recipe(
    est: i32,
    mono: i32,
    grid: *const f64,
    m: usize,
    x: *const f64,
    k: usize,
    y2: f64,
) -> Result<Recipe, Failure> {
    Ok(Recipe {
        estimator: estimator(est)?,
        monotonizer: monotonizer(mono)?,
        grid: ThresholdGrid::new(slice(grid, m, "grid")?.to_vec())?,
        point: EvalPoint::new(slice(x, k, "x")?.to_vec(), y2),
        levels: default_levels(),
    })
}

/// Estimates the conditional CDF at `(x, y2)` on an increasing grid of `m`
/// thresholds and monotonizes it.
///
/// # Safety
/// `grid` must hold `m` values, `x` must hold `k` values (the exogenous
/// regressors without intercept) and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ivdr_fit_curve(
    data: *const IvdrDataset,
    estimator: i32,
    monotonizer: i32,
    grid: *const f64,
    m: usize,
    x: *const f64,
    k: usize,
    y2: f64,
    out: *mut *mut IvdrCurve,
) -> i32 {
    guard(|| {
        let data = handle(data, "data")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let curve = recipe(estimator, monotonizer, grid, m, x, k, y2)?.evaluate(&data.0)?;
        store(out, IvdrCurve { grid: curve.grid.values().to_vec(), values: curve.values });
        Ok(())
    })
}

/// Estimates the raw, possibly non-monotone, CDF.
///
/// # Safety
/// As for [`ivdr_fit_curve`].
#[no_mangle]
pub unsafe extern "C" fn ivdr_fit_raw_curve(
    data: *const IvdrDataset,
    estimator: i32,
    grid: *const f64,
    m: usize,
    x: *const f64,
    k: usize,
    y2: f64,
    out: *mut *mut IvdrCurve,
) -> i32 {
    guard(|| {
        let data = handle(data, "data")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let CdfCurve { grid, values, .. } =
            recipe(estimator, IVDR_MONOTONIZE_NONE, grid, m, x, k, y2)?.raw_curve(&data.0)?;
        store(out, IvdrCurve { grid: grid.values().to_vec(), values });
        Ok(())
    })
}

/// # Safety
/// `curve` must be null or a live curve handle.
#[no_mangle]
pub unsafe extern "C" fn ivdr_curve_len(curve: *const IvdrCurve) -> usize {
    curve.as_ref().map_or(0, |c| c.values.len())
}

/// Copies thresholds and values into caller buffers of length `len`.
/// Either output may be null to skip it.
///
/// # Safety
/// Non-null outputs must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn ivdr_curve_copy(
    curve: *const IvdrCurve,
    grid_out: *mut f64,
    values_out: *mut f64,
    len: usize,
) -> i32 {
    guard(|| {
        let c = handle(curve, "curve")?;
        if !grid_out.is_null() {
            write_out(grid_out, len, &c.grid, "grid_out")?;
        }
        if !values_out.is_null() {
            write_out(values_out, len, &c.values, "values_out")?;
        }
        Ok(())
    })
}

/// # Safety
/// `curve` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ivdr_curve_free(curve: *mut IvdrCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// Pointwise percentile band for one curve from `b` bootstrap replicates.
///
/// # Safety
/// As for [`ivdr_fit_curve`].
#[no_mangle]
pub unsafe extern "C" fn ivdr_bands(
    data: *const IvdrDataset,
    estimator: i32,
    monotonizer: i32,
    grid: *const f64,
    m: usize,
    x: *const f64,
    k: usize,
    y2: f64,
    b: usize,
    level: f64,
    seed: u64,
    out: *mut *mut IvdrBand,
) -> i32 {
    guard(|| {
        let data = handle(data, "data")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = recipe(estimator, monotonizer, grid, m, x, k, y2)?;
        store(out, IvdrBand(bootstrap_bands(&data.0, &r, b, level, seed)?));
        Ok(())
    })
}

/// Band for the difference `estimator_a − estimator_b`, both curves
/// computed on each resample.
///
/// # Safety
/// As for [`ivdr_fit_curve`].
#[no_mangle]
pub unsafe extern "C" fn ivdr_difference_bands(
    data: *const IvdrDataset,
    estimator_a: i32,
    estimator_b: i32,
    monotonizer: i32,
    grid: *const f64,
    m: usize,
    x: *const f64,
    k: usize,
    y2: f64,
    b: usize,
    level: f64,
    seed: u64,
    out: *mut *mut IvdrBand,
) -> i32 {
    guard(|| {
        let data = handle(data, "data")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ra = recipe(estimator_a, monotonizer, grid, m, x, k, y2)?;
        let rb = Recipe { estimator: estimator(estimator_b)?, ..ra.clone() };
        store(out, IvdrBand(difference_bands(&data.0, &ra, &rb, b, level, seed)?));
        Ok(())
    })
}

/// # Safety
/// `band` must be null or a live band handle.
#[no_mangle]
pub unsafe extern "C" fn ivdr_band_len(band: *const IvdrBand) -> usize {
    band.as_ref().map_or(0, |b| b.0.point.len())
}

/// Successful bootstrap replicates behind the band.
///
/// # Safety
/// `band` must be null or a live band handle.
#[no_mangle]
pub unsafe extern "C" fn ivdr_band_replicates(band: *const IvdrBand) -> usize {
    band.as_ref().map_or(0, |b| b.0.replicates)
}

/// Copies the point estimate, bounds and rejection flags (1 when zero is
/// outside the band). Any output may be null to skip it.
///
/// # Safety
/// Non-null outputs must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn ivdr_band_copy(
    band: *const IvdrBand,
    point_out: *mut f64,
    lower_out: *mut f64,
    upper_out: *mut f64,
    rejected_out: *mut u8,
    len: usize,
) -> i32 {
    guard(|| {
        let b = &handle(band, "band")?.0;
        for (ptr, src, what) in
            [(point_out, &b.point, "point_out"), (lower_out, &b.lower, "lower_out"), (upper_out, &b.upper, "upper_out")]
        {
            if !ptr.is_null() {
                write_out(ptr, len, src, what)?;
            }
        }
        if !rejected_out.is_null() {
            if len < b.rejected.len() {
                return Err(invalid(format!("`rejected_out` holds {len} values, need {}", b.rejected.len())));
            }
            for (i, &r) in b.rejected.iter().enumerate() {
                *rejected_out.add(i) = r as u8;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `band` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ivdr_band_free(band: *mut IvdrBand) {
    if !band.is_null() {
        drop(Box::from_raw(band));
    }
}

/// True conditional CDF of the simulation design at `y`, given `x`, `y2`
/// and the censoring point.
#[no_mangle]
pub extern "C" fn ivdr_true_cdf(y: f64, x: f64, y2: f64, censor_at: f64) -> f64 {
    true_cdf_censored(y, x, y2, censor_at)
}

unsafe fn monotonize_into(method: Monotonizer, values: *const f64, n: usize, out: *mut f64) -> i32 {
    guard(|| {
        let v = slice(values, n, "values")?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Failure(IVDR_ERR_NON_FINITE, "values contain NaN or infinity".into()));
        }
        write_out(out, n, &method.apply_values(v, &default_levels()), "out")
    })
}

/// Least-squares nondecreasing fit of `n` values, clamped to `[0, 1]`.
/// `out` may alias `values`.
///
/// # Safety
/// `values` and `out` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn ivdr_isotonic(values: *const f64, n: usize, out: *mut f64) -> i32 {
    monotonize_into(Monotonizer::Isotonic, values, n, out)
}

/// Rearrangement of `n` CDF values in grid order onto the levels
/// 0.01, ..., 0.99. `out` may alias `values`.
///
/// # Safety
/// `values` and `out` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn ivdr_rearrange(values: *const f64, n: usize, out: *mut f64) -> i32 {
    monotonize_into(Monotonizer::Rearrange, values, n, out)
}
