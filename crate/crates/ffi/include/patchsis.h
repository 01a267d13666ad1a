#ifndef PATCHSIS_H
#define PATCHSIS_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PatchsisStatus {
  PATCHSIS_STATUS_OK = 0,
  PATCHSIS_STATUS_NULL_POINTER = 1,
  PATCHSIS_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Model or configuration rejected.
   */
  PATCHSIS_STATUS_VALIDATION = 3,
  /**
   * Solver did not converge or left the admissible region.
   */
  PATCHSIS_STATUS_SOLVER = 4,
  PATCHSIS_STATUS_BUFFER_TOO_SMALL = 5,
  PATCHSIS_STATUS_PANIC = 6,
} PatchsisStatus;

typedef enum PatchsisRecording {
  PATCHSIS_RECORDING_EVERY_EVENT = 0,
  PATCHSIS_RECORDING_GRID = 1,
  PATCHSIS_RECORDING_FINAL_ONLY = 2,
} PatchsisRecording;

/**
 * Opaque validated model.
 */
typedef struct PatchsisModel PatchsisModel;

/**
 * Opaque trajectory. Rows are `[s_1..s_ell, i_1..i_ell]` in population
 * fractions.
 */
typedef struct PatchsisTrajectory PatchsisTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *patchsis_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *patchsis_version(void);

/**
 * Builds and validates a model. `adjacency` is `ell * ell`, row-major, and
 * may be null when `ell == 1`.
 *
 * # Safety
 * Pointers must reference arrays of the stated lengths; `out` must be
 * writable.
 */
enum PatchsisStatus patchsis_model_new(size_t ell,
                                       const double *lambda,
                                       const double *gamma,
                                       const double *adjacency,
                                       double nu_s,
                                       double nu_i,
                                       struct PatchsisModel **out);

/**
 * Builds a model from a JSON configuration document (the `model` section is
 * used; other sections are validated and ignored).
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum PatchsisStatus patchsis_model_from_json(const char *json, struct PatchsisModel **out);

/**
 * # Safety
 * `m` must come from a `patchsis_model_*` constructor and not be used after.
 */
void patchsis_model_free(struct PatchsisModel *m);

/**
 * Number of patches, or 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live model handle.
 */
size_t patchsis_model_patch_count(const struct PatchsisModel *m);

/**
 * # Safety
 * `m` must be a live model handle and `out` writable.
 */
enum PatchsisStatus patchsis_r0(const struct PatchsisModel *m, double *out);

/**
 * Stability modulus of `B + V`; same sign as `R0 - 1`.
 *
 * # Safety
 * `m` must be a live model handle and `out` writable.
 */
enum PatchsisStatus patchsis_alpha_b_plus_v(const struct PatchsisModel *m, double *out);

/**
 * # Safety
 * `out` must hold `len >= ell` doubles.
 */
enum PatchsisStatus patchsis_stationary_n(const struct PatchsisModel *m,
                                          double mass,
                                          double *out,
                                          size_t len);

/**
 * Endemic equilibrium for equal diffusion coefficients.
 *
 * # Safety
 * `s_out` and `i_out` must each hold `len >= ell` doubles.
 */
enum PatchsisStatus patchsis_endemic_equilibrium(const struct PatchsisModel *m,
                                                 double mass,
                                                 double *s_out,
                                                 double *i_out,
                                                 size_t len);

/**
 * Steady state for arbitrary diffusion coefficients, started from
 * `(s0, i0)`. `is_dfe` (optional) receives whether the root found is the
 * disease-free state.
 *
 * # Safety
 * Input arrays hold `ell` doubles, outputs `len >= ell`.
 */
enum PatchsisStatus patchsis_steady_state_general(const struct PatchsisModel *m,
                                                  const double *s0,
                                                  const double *i0,
                                                  double mass,
                                                  double *s_out,
                                                  double *i_out,
                                                  size_t len,
                                                  bool *is_dfe);

/**
 * Stability modulus of the drift Jacobian at `(s, i)`, restricted to the
 * mass-preserving subspace.
 *
 * # Safety
 * `s` and `i` hold `ell` doubles; `out` writable.
 */
enum PatchsisStatus patchsis_stability_modulus(const struct PatchsisModel *m,
                                               const double *s,
                                               const double *i,
                                               double *out);

/**
 * Direct-method simulation from `[n x0]`, returned as population fractions.
 * `recording` is a `PatchsisRecording` value; `grid_dt` is used only with
 * `PATCHSIS_RECORDING_GRID`.
 *
 * # Safety
 * `s0` and `i0` hold `ell` doubles; `out` writable.
 */
enum PatchsisStatus patchsis_simulate(const struct PatchsisModel *m,
                                      const double *s0,
                                      const double *i0,
                                      uint64_t n,
                                      double t_max,
                                      uint64_t seed,
                                      uint32_t recording,
                                      double grid_dt,
                                      struct PatchsisTrajectory **out);

/**
 * Integrates the limiting ODE. `rk4_dt > 0` selects fixed-step RK4,
 * otherwise adaptive Dormand-Prince with default tolerances.
 *
 * # Safety
 * `s0` and `i0` hold `ell` doubles; `out` writable.
 */
enum PatchsisStatus patchsis_integrate(const struct PatchsisModel *m,
                                       const double *s0,
                                       const double *i0,
                                       double t_max,
                                       double record_dt,
                                       double rk4_dt,
                                       struct PatchsisTrajectory **out);

/**
 * Number of record points, or 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live trajectory handle.
 */
size_t patchsis_trajectory_len(const struct PatchsisTrajectory *t);

/**
 * Values per record point (`2 * ell`), or 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live trajectory handle.
 */
size_t patchsis_trajectory_width(const struct PatchsisTrajectory *t);

/**
 * # Safety
 * `t` must be null or a live trajectory handle.
 */
bool patchsis_trajectory_absorbed(const struct PatchsisTrajectory *t);

/**
 * Copies record times (`len` entries) and row-major values (`len * width`
 * entries). Either output may be null to skip it.
 *
 * # Safety
 * Non-null outputs must hold at least the stated capacities.
 */
enum PatchsisStatus patchsis_trajectory_copy(const struct PatchsisTrajectory *t,
                                             double *times_out,
                                             size_t times_cap,
                                             double *values_out,
                                             size_t values_cap);

/**
 * # Safety
 * `t` must come from `patchsis_simulate` or `patchsis_integrate` and not be
 * used after.
 */
void patchsis_trajectory_free(struct PatchsisTrajectory *t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PATCHSIS_H */
