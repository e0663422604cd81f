#ifndef SACE_H
#define SACE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SaceStatus {
  SaceStatus_Ok = 0,
  SaceStatus_NullPointer = 1,
  /**
   * Argument outside the mathematical domain.
   */
  SaceStatus_Domain = 2,
  /**
   * Sizes, grid resolution or divisibility.
   */
  SaceStatus_Precondition = 3,
  /**
   * Dissipativity or noise regularity violated.
   */
  SaceStatus_Assumption = 4,
  SaceStatus_Config = 5,
  SaceStatus_Numerical = 6,
  SaceStatus_BlowUp = 7,
  SaceStatus_Io = 8,
  SaceStatus_BufferTooSmall = 9,
  SaceStatus_InvalidUtf8 = 10,
  SaceStatus_Panic = 11,
} SaceStatus;

/**
 * Parsed and validated experiment configuration.
 */
typedef struct SaceConfig SaceConfig;

/**
 * One sample path of the configured scheme.
 */
typedef struct SaceSimulation SaceSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *sace_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sace_version(void);

/**
 * Parses a TOML experiment config. On success `*out` owns a new handle.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SaceStatus sace_config_parse(const char *text, struct SaceConfig **out);

/**
 * # Safety
 * `cfg` must come from [`sace_config_parse`] and not be used afterwards.
 */
void sace_config_free(struct SaceConfig *cfg);

/**
 * Galerkin dimension `N` of a config.
 *
 * # Safety
 * `cfg` must be a live handle or null (returns 0).
 */
size_t sace_config_n_modes(const struct SaceConfig *cfg);

/**
 * Starts sample path `stream_id` of the configured experiment, seeded with
 * the config's seed.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a valid pointer.
 */
enum SaceStatus sace_simulation_new(const struct SaceConfig *cfg,
                                    uint64_t stream_id,
                                    struct SaceSimulation **out);

/**
 * # Safety
 * `sim` must come from [`sace_simulation_new`] and not be used afterwards.
 */
void sace_simulation_free(struct SaceSimulation *sim);

/**
 * Advances `n_steps` steps; stops at the first blow-up.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum SaceStatus sace_simulation_step(struct SaceSimulation *sim, size_t n_steps);

/**
 * Copies the spectral coefficients into `out[0..len]`; `len` must be at least `N`.
 *
 * # Safety
 * `sim` must be a live handle and `out` valid for `len` writes.
 */
enum SaceStatus sace_simulation_state(const struct SaceSimulation *sim, double *out, size_t len);

/**
 * Replaces the state with `coeffs[0..len]`; `len` must equal `N`.
 *
 * # Safety
 * `sim` must be a live handle and `coeffs` valid for `len` reads.
 */
enum SaceStatus sace_simulation_set_state(struct SaceSimulation *sim,
                                          const double *coeffs,
                                          size_t len);

/**
 * Current time `k tau`, or NaN for a null handle.
 *
 * # Safety
 * `sim` must be a live handle or null.
 */
double sace_simulation_time(const struct SaceSimulation *sim);

/**
 * Sup norm of the current state on the oversampled grid.
 *
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
enum SaceStatus sace_simulation_sup_norm(struct SaceSimulation *sim, double *out);

/**
 * Monte Carlo estimate of `E Phi(V_K)` with the config's functional,
 * sample count and seed.
 *
 * # Safety
 * `cfg` must be a live handle; output pointers must be valid (`blowups` may be null).
 */
enum SaceStatus sace_weak_value(const struct SaceConfig *cfg,
                                double *mean,
                                double *standard_error,
                                size_t *blowups);

/**
 * Number of points `m` of the default (oversampled) grid for `n_modes`.
 */
size_t sace_grid_points(size_t n_modes);

/**
 * Grid values `v(j / (m + 1))`, `j = 1..m`, of the field with `n_modes`
 * coefficients, on a grid of `m >= n_modes` points.
 *
 * # Safety
 * `coeffs` must be valid for `n_modes` reads and `values` for `m` writes.
 */
enum SaceStatus sace_to_physical(const double *coeffs, size_t n_modes, double *values, size_t m);

/**
 * First `n_modes` sine coefficients of `m` grid values.
 *
 * # Safety
 * `values` must be valid for `m` reads and `coeffs` for `n_modes` writes.
 */
enum SaceStatus sace_to_spectral(const double *values, size_t m, double *coeffs, size_t n_modes);

/**
 * Runs the algebraic self-test suite; `*passed` receives the verdict.
 *
 * # Safety
 * `passed` must be a valid pointer.
 */
enum SaceStatus sace_self_test(bool *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SACE_H */
