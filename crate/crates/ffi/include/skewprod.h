#ifndef SKEWPROD_H
#define SKEWPROD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SpStatus {
  SP_STATUS_OK = 0,
  SP_STATUS_NULL_POINTER = 1,
  SP_STATUS_INVALID_ARGUMENT = 2,
  SP_STATUS_CONFIG = 3,
  SP_STATUS_NUMERICAL = 4,
  SP_STATUS_HYPOTHESIS_VIOLATED = 5,
  SP_STATUS_IO = 6,
  SP_STATUS_PANIC = 7,
} SpStatus;

/**
 * Evaluator of the transverse potential on a fixed fiber grid.
 */
typedef struct SpPhiSolver SpPhiSolver;

/**
 * Eigendata of a discretized transfer operator.
 */
typedef struct SpRpf SpRpf;

/**
 * A skew product: fiber family plus potential.
 */
typedef struct SpSystem SpSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread. Valid until the next
 * failing call on the same thread; never null.
 */
const char *sp_last_error_message(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *sp_version(void);

/**
 * New system with fiber exponent `p(x) = p0 + p1 (1 − cos 2πx)/2`, neutral
 * band half-width `delta_a` and the zero potential.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum SpStatus sp_system_new(double p0, double p1, double delta_a, struct SpSystem **out);

/**
 * New system from the `fiber_family` and `potential` of a JSON configuration.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` valid for writes.
 */
enum SpStatus sp_system_from_config_json(const char *json, struct SpSystem **out);

/**
 * Adds `amplitude · cos(2π(kx·x + ky·y))` to the potential.
 *
 * # Safety
 * `sys` must be a live handle.
 */
enum SpStatus sp_system_add_term(struct SpSystem *sys, int32_t kx, int32_t ky, double amplitude);

/**
 * Sets the constant part of the potential.
 *
 * # Safety
 * `sys` must be a live handle.
 */
enum SpStatus sp_system_set_constant(struct SpSystem *sys, double c);

/**
 * Potential value at `(x, y)`.
 *
 * # Safety
 * `sys` must be a live handle and `out` valid for writes.
 */
enum SpStatus sp_potential_eval(const struct SpSystem *sys, double x, double y, double *out);

/**
 * `g_x(y)`.
 *
 * # Safety
 * `sys` must be a live handle and `out` valid for writes.
 */
enum SpStatus sp_fiber_forward(const struct SpSystem *sys, double x, double y, double *out);

/**
 * Both preimages of `t` under `g_x`, neutral branch first, into `out[0..2]`.
 *
 * # Safety
 * `sys` must be a live handle and `out` valid for two writes.
 */
enum SpStatus sp_fiber_inverse(const struct SpSystem *sys, double x, double t, double *out);

/**
 * # Safety
 * `sys` must come from `sp_system_new` or be null.
 */
void sp_system_free(struct SpSystem *sys);

/**
 * Solver on an `n`-node fiber grid, paired at the fiber node `anchor`.
 *
 * # Safety
 * `sys` must be a live handle and `out` valid for writes.
 */
enum SpStatus sp_phi_solver_new(const struct SpSystem *sys,
                                size_t grid,
                                double anchor,
                                struct SpPhiSolver **out);

/**
 * `Φ(x)` to `tol` for the base point with binary digits `digits[0..len]`.
 *
 * # Safety
 * `solver` must be a live handle, `digits` readable for `len` bytes and
 * `out` valid for writes.
 */
enum SpStatus sp_phi_compute(const struct SpPhiSolver *solver,
                             const uint8_t *digits,
                             size_t len,
                             double tol,
                             double *out);

/**
 * `Φ_n(x)` for the base point with binary digits `digits[0..len]`.
 *
 * # Safety
 * As for [`sp_phi_compute`].
 */
enum SpStatus sp_phi_n(const struct SpPhiSolver *solver,
                       const uint8_t *digits,
                       size_t len,
                       size_t n,
                       double *out);

/**
 * # Safety
 * `solver` must come from `sp_phi_solver_new` or be null.
 */
void sp_phi_solver_free(struct SpPhiSolver *solver);

/**
 * Eigendata of the full operator on an `nx × ny` grid.
 *
 * # Safety
 * `sys` must be a live handle and `out` valid for writes.
 */
enum SpStatus sp_rpf_full_solve(const struct SpSystem *sys,
                                size_t nx,
                                size_t ny,
                                double tol,
                                size_t max_iter,
                                struct SpRpf **out);

/**
 * Eigendata of `𝓛_Φ` on `nx` base nodes, `Φ` computed by `solver` to `phi_tol`.
 *
 * # Safety
 * `solver` must be a live handle and `out` valid for writes.
 */
enum SpStatus sp_rpf_base_solve(const struct SpPhiSolver *solver,
                                size_t nx,
                                double phi_tol,
                                double tol,
                                size_t max_iter,
                                struct SpRpf **out);

/**
 * # Safety
 * `rpf` must be a live handle and `out` valid for writes.
 */
enum SpStatus sp_rpf_log_eigenvalue(const struct SpRpf *rpf, double *out);

/**
 * Number of grid nodes of the solution.
 *
 * # Safety
 * `rpf` must be a live handle and `out` valid for writes.
 */
enum SpStatus sp_rpf_len(const struct SpRpf *rpf, size_t *out);

/**
 * Copies the eigenfunction (`which = 0`) or the eigenmeasure weights
 * (`which = 1`) into `buf[0..len]`; `len` must equal [`sp_rpf_len`].
 *
 * # Safety
 * `rpf` must be a live handle and `buf` valid for `len` writes.
 */
enum SpStatus sp_rpf_copy(const struct SpRpf *rpf, int32_t which, double *buf, size_t len);

/**
 * # Safety
 * `rpf` must come from an `sp_rpf_*_solve` call or be null.
 */
void sp_rpf_free(struct SpRpf *rpf);

/**
 * Number of words of length `n` over `d` letters with at least `iota·n`
 * letters `≤ q`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum SpStatus sp_count_i(double iota, size_t n, uint8_t q, uint8_t d, uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SKEWPROD_H */
