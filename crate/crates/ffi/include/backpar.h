/* C interface to the backpar toolkit. Generated by cbindgen; do not edit. */

#ifndef BACKPAR_H
#define BACKPAR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a C-API call.
 */
typedef enum BackparStatus {
  BACKPAR_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  BACKPAR_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  BACKPAR_STATUS_INVALID_UTF8 = 2,
  /**
   * The configuration or an argument failed validation.
   */
  BACKPAR_STATUS_INVALID_ARGUMENT = 3,
  /**
   * The numerics failed (singular pivot, divergence, non-finite values).
   */
  BACKPAR_STATUS_NUMERICAL_FAILURE = 4,
  /**
   * A structural hypothesis of the stability theory is violated.
   */
  BACKPAR_STATUS_HYPOTHESIS_FAILURE = 5,
  /**
   * An output buffer does not match the grid size.
   */
  BACKPAR_STATUS_BUFFER_TOO_SMALL = 6,
} BackparStatus;

/**
 * Opaque problem handle: the validated configuration of one run.
 */
typedef struct BackparProblem BackparProblem;

/**
 * Reconstruction statistics mirrored to C.
 */
typedef struct BackparReconStats {
  uintptr_t cg_iterations;
  double final_residual;
  double alpha_reg;
  double data_misfit;
  bool converged;
} BackparReconStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *backpar_last_error_message(void);

/**
 * Version of the underlying crate as a static string.
 */
const char *backpar_version(void);

/**
 * Builds a problem handle from a JSON run configuration (the same format
 * the CLI accepts). On success writes the handle to `out`; free it with
 * [`backpar_problem_free`].
 *
 * # Safety
 * `json` must point to a NUL-terminated string and `out` must be a valid
 * pointer to writable memory.
 */
enum BackparStatus backpar_problem_from_json(const char *json, struct BackparProblem **out);

/**
 * Releases a handle created by [`backpar_problem_from_json`]. A null
 * pointer is ignored.
 *
 * # Safety
 * `problem` must be a handle returned by this library that has not been
 * freed already.
 */
void backpar_problem_free(struct BackparProblem *problem);

/**
 * Number of grid nodes; field buffers must have exactly this length.
 *
 * # Safety
 * `problem` must be a live handle from this library.
 */
uintptr_t backpar_problem_node_count(const struct BackparProblem *problem);

/**
 * Copies the grid node coordinates into `out`.
 *
 * # Safety
 * `problem` must be a live handle; `out` must point to `out_len` writable
 * doubles.
 */
enum BackparStatus backpar_grid_nodes(const struct BackparProblem *problem,
                                      double *out,
                                      uintptr_t out_len);

/**
 * Marches the configured problem from the supplied initial state over
 * `[0, T]` and writes the terminal state to `out_terminal`. Semilinear
 * problems take the Newton path automatically.
 *
 * # Safety
 * `problem` must be a live handle; `u0` must point to `u0_len` readable
 * doubles and `out_terminal` to `out_len` writable doubles.
 */
enum BackparStatus backpar_forward_solve(const struct BackparProblem *problem,
                                         const double *u0,
                                         uintptr_t u0_len,
                                         double *out_terminal,
                                         uintptr_t out_len);

/**
 * Reconstructs the state at the configured `t0` from terminal data and
 * writes the estimate to `out_estimate`; `out_stats` (optional) receives
 * the iteration statistics. The regularization weight comes from the
 * configuration (`alpha_reg`, with `"auto"` meaning the a priori floor).
 *
 * # Safety
 * `problem` must be a live handle; `data` must point to `data_len`
 * readable doubles, `out_estimate` to `out_len` writable doubles, and
 * `out_stats` must be null or valid for writes.
 */
enum BackparStatus backpar_reconstruct(const struct BackparProblem *problem,
                                       const double *data,
                                       uintptr_t data_len,
                                       double *out_estimate,
                                       uintptr_t out_len,
                                       struct BackparReconStats *out_stats);

/**
 * Runs the structural-hypothesis checks and returns the JSON report as a
 * newly allocated string in `out_json`; free it with
 * [`backpar_string_free`]. The status is `HypothesisFailure` when the
 * checks required for this problem fail (the report is still written).
 *
 * # Safety
 * `problem` must be a live handle and `out_json` a valid pointer.
 */
enum BackparStatus backpar_check_assumptions(const struct BackparProblem *problem, char **out_json);

/**
 * Frees a string returned by this library. A null pointer is ignored.
 *
 * # Safety
 * `s` must have been returned by this library and not freed already.
 */
void backpar_string_free(char *s);

/**
 * Samples the configured initial-state expression onto the grid; useful
 * for driving [`backpar_forward_solve`] from the bound language.
 *
 * # Safety
 * `problem` must be a live handle; `out` must point to `out_len` writable
 * doubles.
 */
enum BackparStatus backpar_initial_state(const struct BackparProblem *problem,
                                         double *out,
                                         uintptr_t out_len);

/**
 * Holder exponent `theta(t0, T, lambda)`; writes the value to `out`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum BackparStatus backpar_theta_exponent(double t0, double horizon, double lambda, double *out);

/**
 * Equalizing choice of the large parameter `s` (0 when `m <= d0`).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum BackparStatus backpar_optimal_s(double m,
                                     double d0,
                                     double t0,
                                     double horizon,
                                     double lambda,
                                     double *out);

/**
 * Two-term Holder bound `C (M^(1-theta) D0^theta + D0)`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum BackparStatus backpar_holder_bound(double d0,
                                        double m,
                                        double t0,
                                        double horizon,
                                        double lambda,
                                        double constant,
                                        double *out);

/**
 * Logarithmic bound `C (log 1/D)^(-alpha)`, requiring `0 < D < 1`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum BackparStatus backpar_log_rate_bound(double d, double alpha, double constant, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BACKPAR_H */
