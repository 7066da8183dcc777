#ifndef POGIT_H
#define POGIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PogitStatus {
  POGIT_STATUS_OK = 0,
  /**
   * The fit handle was produced but the optimizer stopped before convergence.
   */
  POGIT_STATUS_NOT_CONVERGED = 1,
  POGIT_STATUS_NULL_POINTER = 2,
  POGIT_STATUS_INVALID_UTF8 = 3,
  POGIT_STATUS_INVALID_ARGUMENT = 4,
  POGIT_STATUS_SCHEMA = 5,
  POGIT_STATUS_INVALID_DATA = 6,
  POGIT_STATUS_INFEASIBLE = 7,
  POGIT_STATUS_NUMERICAL = 8,
  POGIT_STATUS_RANK_DEFICIENT = 9,
  POGIT_STATUS_ORDERING = 10,
  POGIT_STATUS_PROTOCOL = 11,
  POGIT_STATUS_IO = 12,
  POGIT_STATUS_PANIC = 13,
} PogitStatus;

typedef struct PogitDataset PogitDataset;

typedef struct PogitFit PogitFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Owned by the library.
 */
const char *pogit_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *pogit_version(void);

/**
 * New dataset holding `n` reported counts and no covariates.
 *
 * # Safety
 * `counts` must point to `n` values (or be null with `n == 0`); `out` must be writable.
 */
enum PogitStatus pogit_dataset_new(const uint64_t *counts, size_t n, struct PogitDataset **out);

/**
 * Read a CSV laid out by the `data` section of a model config.
 *
 * # Safety
 * `path` and `config_json` must be nul-terminated strings; `out` must be writable.
 */
enum PogitStatus pogit_dataset_read_csv(const char *path,
                                        const char *config_json,
                                        struct PogitDataset **out);

/**
 * # Safety
 * `dataset` must come from this library; `name` must be nul-terminated; `values` must hold `n` values.
 */
enum PogitStatus pogit_dataset_add_covariate(struct PogitDataset *dataset,
                                             const char *name,
                                             const double *values,
                                             size_t n);

/**
 * Per-row exposure, a multiplicative factor on the rate.
 *
 * # Safety
 * `dataset` must come from this library; `values` must hold `n` values.
 */
enum PogitStatus pogit_dataset_set_exposure(struct PogitDataset *dataset,
                                            const double *values,
                                            size_t n);

/**
 * # Safety
 * `dataset` must come from this library; `counts` must hold `n` values.
 */
enum PogitStatus pogit_dataset_set_true_counts(struct PogitDataset *dataset,
                                               const uint64_t *counts,
                                               size_t n);

/**
 * Number of rows; 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or come from this library.
 */
size_t pogit_dataset_len(const struct PogitDataset *dataset);

/**
 * # Safety
 * `dataset` must be null or come from this library and not be used afterwards.
 */
void pogit_dataset_free(struct PogitDataset *dataset);

/**
 * Fit the model described by `config_json` to `dataset`.
 *
 * Returns `POGIT_STATUS_NOT_CONVERGED` with a valid handle when the optimizer
 * stopped early.
 *
 * # Safety
 * `config_json` must be nul-terminated; `dataset` must come from this library; `out` must be writable.
 */
enum PogitStatus pogit_fit(const char *config_json,
                           const struct PogitDataset *dataset,
                           struct PogitFit **out);

/**
 * # Safety
 * `fit` must be null or come from this library.
 */
size_t pogit_fit_n_coefficients(const struct PogitFit *fit);

/**
 * Name of coefficient `i` (e.g. `p.x`), owned by the fit handle; null when out of range.
 *
 * # Safety
 * `fit` must be null or come from this library.
 */
const char *pogit_fit_coefficient_name(const struct PogitFit *fit, size_t i);

/**
 * Copy the estimates into `out`, which must hold exactly the coefficient count.
 *
 * # Safety
 * `fit` must come from this library; `out` must be writable for `len` values.
 */
enum PogitStatus pogit_fit_coefficients(const struct PogitFit *fit, double *out, size_t len);

/**
 * Row-major sandwich covariance; `len` must be the squared coefficient count.
 *
 * # Safety
 * `fit` must come from this library; `out` must be writable for `len` values.
 */
enum PogitStatus pogit_fit_covariance(const struct PogitFit *fit, double *out, size_t len);

/**
 * # Safety
 * `fit` must be null or come from this library.
 */
bool pogit_fit_converged(const struct PogitFit *fit);

/**
 * Penalized objective at the estimate; NaN for a null handle.
 *
 * # Safety
 * `fit` must be null or come from this library.
 */
double pogit_fit_objective(const struct PogitFit *fit);

/**
 * # Safety
 * `fit` must be null or come from this library.
 */
double pogit_fit_kkt_residual(const struct PogitFit *fit);

/**
 * # Safety
 * `fit` must be null or come from this library and not be used afterwards.
 */
void pogit_fit_free(struct PogitFit *fit);

/**
 * Cramér-Rao bound of the two-covariate model, written row-major into `out[4]`.
 *
 * # Safety
 * `out` must be writable for 4 values.
 */
enum PogitStatus pogit_crlb(double theta_lambda,
                            double theta_p,
                            double mu_lambda,
                            double sigma_lambda,
                            double sigma_p,
                            size_t n,
                            double *out);

/**
 * Maximum of `u^2 e^u / (1 + e^u)^3` and where it is attained.
 *
 * # Safety
 * Both outputs must be writable.
 */
enum PogitStatus pogit_constant_c(double *value, double *argmax);

double pogit_aic(size_t k, double loglik);

/**
 * Likelihood-ratio statistic and chi-square p-value for nested models.
 *
 * # Safety
 * Both outputs must be writable.
 */
enum PogitStatus pogit_lrt(double loglik_full,
                           double loglik_reduced,
                           size_t df,
                           double *statistic,
                           double *p_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POGIT_H */
