#ifndef IVDR_H
#define IVDR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define IVDR_OK 0

#define IVDR_ERR_NULL_POINTER 1

#define IVDR_ERR_INVALID_ARGUMENT 2

#define IVDR_ERR_RANK_DEFICIENT 3

#define IVDR_ERR_DEGENERATE 4

#define IVDR_ERR_SEPARATION 5

#define IVDR_ERR_BOUNDARY 6

#define IVDR_ERR_NON_FINITE 7

#define IVDR_ERR_NOT_CONVERGED 8

#define IVDR_ERR_BOOTSTRAP 9

#define IVDR_ERR_IO 10

#define IVDR_ERR_DATA 11

#define IVDR_ERR_PANIC 99

#define IVDR_ESTIMATOR_PROBIT 0

#define IVDR_ESTIMATOR_IV_ML 1

#define IVDR_ESTIMATOR_THREE_STEP 2

// Clamps to `[0, 1]` without reordering.
#define IVDR_MONOTONIZE_NONE 0

#define IVDR_MONOTONIZE_ISOTONIC 1

#define IVDR_MONOTONIZE_REARRANGE 2

// Pointwise bootstrap band.
typedef struct IvdrBand IvdrBand;

// A CDF curve on a threshold grid.
typedef struct IvdrCurve IvdrCurve;

// Sample `(Y, Y2, X, Z)`; the intercept is added internally.
typedef struct IvdrDataset IvdrDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *ivdr_last_error_message(void);

// Builds a dataset from `n` observations. `x` holds `k` exogenous columns
// without the intercept and `z` holds `l >= 1` instruments.
//
// # Safety
// Array arguments must point to `n`, `n`, `n * k` and `n * l` values; `out`
// must be writable.
int32_t ivdr_dataset_new(size_t n,
                         const double *y,
                         const double *y2,
                         const double *x,
                         size_t k,
                         const double *z,
                         size_t l,
                         struct IvdrDataset **out);

// Draws the simulation design with one exogenous regressor and one
// instrument; outcomes below `censor_at` are set to `censor_at`.
//
// # Safety
// `out` must be writable.
int32_t ivdr_dataset_simulate(double rho,
                              size_t n,
                              double censor_at,
                              uint64_t seed,
                              struct IvdrDataset **out);

// Number of observations, or 0 for a null handle.
//
// # Safety
// `data` must be null or a live dataset handle.
size_t ivdr_dataset_len(const struct IvdrDataset *data);

// # Safety
// `data` must be null or a handle not yet freed.
void ivdr_dataset_free(struct IvdrDataset *data);

// Estimates the conditional CDF at `(x, y2)` on an increasing grid of `m`
// thresholds and monotonizes it.
//
// # Safety
// `grid` must hold `m` values, `x` must hold `k` values (the exogenous
// regressors without intercept) and `out` must be writable.
int32_t ivdr_fit_curve(const struct IvdrDataset *data,
                       int32_t estimator,
                       int32_t monotonizer,
                       const double *grid,
                       size_t m,
                       const double *x,
                       size_t k,
                       double y2,
                       struct IvdrCurve **out);

// Estimates the raw, possibly non-monotone, CDF.
//
// # Safety
// As for [`ivdr_fit_curve`].
int32_t ivdr_fit_raw_curve(const struct IvdrDataset *data,
                           int32_t estimator,
                           const double *grid,
                           size_t m,
                           const double *x,
                           size_t k,
                           double y2,
                           struct IvdrCurve **out);

// # Safety
// `curve` must be null or a live curve handle.
size_t ivdr_curve_len(const struct IvdrCurve *curve);

// Copies thresholds and values into caller buffers of length `len`.
// Either output may be null to skip it.
//
// # Safety
// Non-null outputs must hold `len` values.
int32_t ivdr_curve_copy(const struct IvdrCurve *curve,
                        double *grid_out,
                        double *values_out,
                        size_t len);

// # Safety
// `curve` must be null or a handle not yet freed.
void ivdr_curve_free(struct IvdrCurve *curve);

// Pointwise percentile band for one curve from `b` bootstrap replicates.
//
// # Safety
// As for [`ivdr_fit_curve`].
int32_t ivdr_bands(const struct IvdrDataset *data,
                   int32_t estimator,
                   int32_t monotonizer,
                   const double *grid,
                   size_t m,
                   const double *x,
                   size_t k,
                   double y2,
                   size_t b,
                   double level,
                   uint64_t seed,
                   struct IvdrBand **out);

// Band for the difference `estimator_a − estimator_b`, both curves
// computed on each resample.
//
// # Safety
// As for [`ivdr_fit_curve`].
int32_t ivdr_difference_bands(const struct IvdrDataset *data,
                              int32_t estimator_a,
                              int32_t estimator_b,
                              int32_t monotonizer,
                              const double *grid,
                              size_t m,
                              const double *x,
                              size_t k,
                              double y2,
                              size_t b,
                              double level,
                              uint64_t seed,
                              struct IvdrBand **out);

// # Safety
// `band` must be null or a live band handle.
size_t ivdr_band_len(const struct IvdrBand *band);

// Successful bootstrap replicates behind the band.
//
// # Safety
// `band` must be null or a live band handle.
size_t ivdr_band_replicates(const struct IvdrBand *band);

// Copies the point estimate, bounds and rejection flags (1 when zero is
// outside the band). Any output may be null to skip it.
//
// # Safety
// Non-null outputs must hold `len` elements.
int32_t ivdr_band_copy(const struct IvdrBand *band,
                       double *point_out,
                       double *lower_out,
                       double *upper_out,
                       uint8_t *rejected_out,
                       size_t len);

// # Safety
// `band` must be null or a handle not yet freed.
void ivdr_band_free(struct IvdrBand *band);

// True conditional CDF of the simulation design at `y`, given `x`, `y2`
// and the censoring point.
double ivdr_true_cdf(double y, double x, double y2, double censor_at);

// Least-squares nondecreasing fit of `n` values, clamped to `[0, 1]`.
// `out` may alias `values`.
//
// # Safety
// `values` and `out` must hold `n` values.
int32_t ivdr_isotonic(const double *values, size_t n, double *out);

// Rearrangement of `n` CDF values in grid order onto the levels
// 0.01, ..., 0.99. `out` may alias `values`.
//
// # Safety
// `values` and `out` must hold `n` values.
int32_t ivdr_rearrange(const double *values, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IVDR_H */
