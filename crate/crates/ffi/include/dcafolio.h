#ifndef DCAFOLIO_H
#define DCAFOLIO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

#define DF_OK 0

#define DF_USAGE 1

#define DF_DATA 2

#define DF_INFEASIBLE 3

#define DF_LIMIT 4

#define DF_PANIC 5

/**
 * Opaque validated instance.
 */
typedef struct DfInstance DfInstance;

/**
 * Opaque certified solution.
 */
typedef struct DfSolution DfSolution;

/**
 * DCA parameters. Fill with [`df_dca_options_default`] before changing
 * fields.
 */
typedef struct DfDcaOptions {
  double theta;
  double epsilon;
  size_t max_iter;
  /**
   * Nonzero enables θ escalation while `z` is fractional.
   */
  int escalate;
  double qp_tol;
} DfDcaOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *df_version(void);

/**
 * Message of the last failed call on this thread; empty if none. Valid until
 * the next failing call on the same thread.
 */
const char *df_last_error_message(void);

/**
 * Reads an instance in the key/value text format.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
int df_instance_load(const char *path, struct DfInstance **out);

/**
 * Builds an instance from arrays of length `n` (`covariance` is `n × n`
 * row-major). Holdings `P` and benchmark `x̄` are separate arrays.
 *
 * # Safety
 * Every array pointer must reference at least the stated number of doubles
 * and `out` must be a valid pointer.
 */
int df_instance_new(size_t n, size_t card, double required_return, const double *returns, const double *covariance, const double *lower, const double *upper, const double *buy_cost, const double *sell_cost, const double *holdings, const double *benchmark, struct DfInstance **out);

/**
 * Seeded random instance; `card = 0` picks the default `min(n, 5)`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
int df_instance_generate(size_t n, uint64_t seed, size_t card, struct DfInstance **out);

/**
 * Number of assets; 0 for a null handle.
 *
 * # Safety
 * `inst` must be null or a live handle.
 */
size_t df_instance_n(const struct DfInstance *inst);

/**
 * Cardinality; 0 for a null handle.
 *
 * # Safety
 * `inst` must be null or a live handle.
 */
size_t df_instance_card(const struct DfInstance *inst);

/**
 * Changes the cardinality; the handle is untouched on failure.
 *
 * # Safety
 * `inst` must be a live handle.
 */
int df_instance_set_card(struct DfInstance *inst, size_t card);

/**
 * # Safety
 * `inst` must be null or a handle not yet freed.
 */
void df_instance_free(struct DfInstance *inst);

/**
 * Defaults: θ = 2, ε = 1e-6, 200 iterations, escalation on, QP tolerance 1e-8.
 */
struct DfDcaOptions df_dca_options_default(void);

/**
 * Runs DCA. `options` may be null for defaults. On [`DF_OK`] `*out` holds a
 * solution handle; otherwise it is left untouched.
 *
 * # Safety
 * `inst` must be a live handle, `options` null or valid, `out` valid.
 */
int df_solve_dca(const struct DfInstance *inst, const struct DfDcaOptions *options, struct DfSolution **out);

/**
 * Exact branch-and-bound. Returns [`DF_OK`] when optimality is proved and
 * [`DF_LIMIT`] when a limit stopped the search; in both cases `*out` holds
 * the best solution found, if any (null otherwise).
 *
 * # Safety
 * `inst` must be a live handle and `out` valid.
 */
int df_solve_exact(const struct DfInstance *inst, double time_limit_seconds, size_t max_nodes, struct DfSolution **out);

/**
 * Tracking risk `(x - x̄)ᵗQ(x - x̄)`; NaN for a null handle.
 *
 * # Safety
 * `sol` must be null or a live handle.
 */
double df_solution_objective(const struct DfSolution *sol);

/**
 * DCA iterations, or branch-and-bound nodes for exact solutions.
 *
 * # Safety
 * `sol` must be null or a live handle.
 */
size_t df_solution_iterations(const struct DfSolution *sol);

/**
 * Final `upper - lower` of an exact solve; NaN for DCA solutions.
 *
 * # Safety
 * `sol` must be null or a live handle.
 */
double df_solution_gap(const struct DfSolution *sol);

/**
 * Number of assets in the support.
 *
 * # Safety
 * `sol` must be null or a live handle.
 */
size_t df_solution_support_len(const struct DfSolution *sol);

/**
 * Copies up to `cap` ascending 0-based support indices into `buf` and
 * returns the full support length.
 *
 * # Safety
 * `sol` must be null or a live handle; `buf` must hold `cap` entries.
 */
size_t df_solution_support(const struct DfSolution *sol, size_t *buf, size_t cap);

/**
 * Copies up to `cap` weights `x_j` into `buf` and returns `n`.
 *
 * # Safety
 * `sol` must be null or a live handle; `buf` must hold `cap` entries.
 */
size_t df_solution_weights(const struct DfSolution *sol, double *buf, size_t cap);

/**
 * # Safety
 * `sol` must be null or a handle not yet freed.
 */
void df_solution_free(struct DfSolution *sol);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DCAFOLIO_H */
