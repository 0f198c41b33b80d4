#ifndef PDRO_H
#define PDRO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum PdroStatus {
  PDRO_STATUS_OK = 0,
  PDRO_STATUS_NULL_POINTER = 1,
  PDRO_STATUS_INVALID_ARGUMENT = 2,
  PDRO_STATUS_DIMENSION = 3,
  PDRO_STATUS_INSUFFICIENT_DATA = 4,
  PDRO_STATUS_UNSUPPORTED = 5,
  PDRO_STATUS_SOLVER = 6,
  PDRO_STATUS_CONFIG = 7,
  PDRO_STATUS_PARSE = 8,
  PDRO_STATUS_IO = 9,
  PDRO_STATUS_PANIC = 10,
} PdroStatus;

/**
 * Weighted atoms, one row per atom.
 */
typedef struct PdroEmpirical PdroEmpirical;

/**
 * A fitted estimator.
 */
typedef struct PdroModel PdroModel;

/**
 * Records of a benchmark run, held as the results CSV text.
 */
typedef struct PdroResults PdroResults;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes) and returns its full length in bytes.
 * `buf` may be null to query the length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t pdro_last_error(char *buf, uintptr_t len);

/**
 * Builds a distribution from `m × d` row-major `atoms` and optional
 * probabilities `weights` (uniform when null).
 *
 * # Safety
 * `atoms` must hold `m * d` values, `weights` must be null or hold `m`
 * values, and `out` must be writable.
 */
enum PdroStatus pdro_empirical_new(const double *atoms,
                                   uintptr_t m,
                                   uintptr_t d,
                                   const double *weights,
                                   struct PdroEmpirical **out);

/**
 * # Safety
 * `h` must be null or a handle from this library, not yet freed.
 */
void pdro_empirical_free(struct PdroEmpirical *h);

/**
 * Number of atoms, or 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
uintptr_t pdro_empirical_len(const struct PdroEmpirical *h);

/**
 * Dimension of the atoms, or 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
uintptr_t pdro_empirical_dim(const struct PdroEmpirical *h);

/**
 * Writes the weighted mean into `out[0..d]`.
 *
 * # Safety
 * `h` must be a live handle and `out` must hold `d` writable values.
 */
enum PdroStatus pdro_empirical_mean(const struct PdroEmpirical *h, double *out, uintptr_t d);

/**
 * Fits `estimator` (`"empirical"`, `"beta"`, `"normal"` or
 * `"noncontext-p"`) to `data`; `r` is the Beta support half-width.
 *
 * # Safety
 * `estimator` must be a NUL-terminated string, `data` a live handle and
 * `out` writable.
 */
enum PdroStatus pdro_model_fit(const char *estimator,
                               const struct PdroEmpirical *data,
                               double r,
                               struct PdroModel **out);

/**
 * # Safety
 * `h` must be null or a handle from this library, not yet freed.
 */
void pdro_model_free(struct PdroModel *h);

/**
 * Draws the `m`-atom Monte Carlo center of `model` with `seed`. The
 * empirical estimator returns its training sample.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum PdroStatus pdro_model_sample(const struct PdroModel *model,
                                  uintptr_t m,
                                  uint64_t seed,
                                  struct PdroEmpirical **out);

/**
 * Worst-case expectation of `values` over the `kind` ball (`"chi2"`,
 * `"kl"` or `"w1"`) of radius `eps` around `base` (uniform when null).
 * `lipschitz` is used by `"w1"` only. When `out_weights` is non-null and
 * the solver produces worst-case probabilities they are written there.
 *
 * # Safety
 * `values` must hold `m` values, `base` and `out_weights` must be null or
 * hold `m` values, and `out_value` must be writable.
 */
enum PdroStatus pdro_worst_case(const char *kind,
                                const double *values,
                                const double *base,
                                uintptr_t m,
                                double eps,
                                double lipschitz,
                                double *out_value,
                                double *out_weights);

/**
 * Minimizes the downside risk `(mu − ξᵀx)_+^gamma` over
 * `{x : Σx = 1, x ≥ −tau}` against `center`. `kind` null means empirical
 * risk; otherwise `"chi2"`, `"kl"` or `"w1"` with radius `eps`.
 *
 * # Safety
 * `center` must be a live handle, `kind` null or NUL-terminated, `x_out`
 * must hold `d` writable values and `objective_out` must be writable.
 */
enum PdroStatus pdro_solve_portfolio(const struct PdroEmpirical *center,
                                     double mu,
                                     double gamma,
                                     double tau,
                                     const char *kind,
                                     double eps,
                                     uintptr_t max_iter,
                                     double *x_out,
                                     uintptr_t d,
                                     double *objective_out);

/**
 * Runs the experiment described by `config` (the flat `key = value` text
 * accepted by the command line tool) and returns its records.
 *
 * # Safety
 * `config` must be NUL-terminated and `out` writable.
 */
enum PdroStatus pdro_run_experiment(const char *config, struct PdroResults **out);

/**
 * # Safety
 * `h` must be null or a handle from this library, not yet freed.
 */
void pdro_results_free(struct PdroResults *h);

/**
 * Number of trial records, or 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
uintptr_t pdro_results_len(const struct PdroResults *h);

/**
 * The results CSV, valid while `h` lives; null for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
const char *pdro_results_csv(const struct PdroResults *h);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PDRO_H */
