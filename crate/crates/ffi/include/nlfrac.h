/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef NLFRAC_H
#define NLFRAC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call. Codes 2 to 4 match the exit codes of the command line tool.
 */
typedef enum NlfracStatus {
  NLFRAC_STATUS_OK = 0,
  NLFRAC_STATUS_IO = 1,
  NLFRAC_STATUS_CONFIG = 2,
  NLFRAC_STATUS_SOLVER = 3,
  NLFRAC_STATUS_INVERSION = 4,
  NLFRAC_STATUS_NULL_POINTER = 5,
  NLFRAC_STATUS_INVALID_ARGUMENT = 6,
  NLFRAC_STATUS_PANIC = 7,
} NlfracStatus;

/**
 * Coefficients `b`, `d(x, y)(x - y)` and the Taylor coefficients of `a`, sampled on Ω.
 */
typedef struct NlfracCoefficients NlfracCoefficients;

/**
 * Parsed experiment configuration.
 */
typedef struct NlfracConfig NlfracConfig;

/**
 * Grid, assembled operator and factorization.
 */
typedef struct NlfracModel NlfracModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next call.
 */
const char *nlfrac_last_error(void);

/**
 * Static name of a status code.
 */
const char *nlfrac_status_name(enum NlfracStatus status);

/**
 * Parses a TOML configuration (may be empty) and `n_overrides` strings `key=value`.
 *
 * # Safety
 * `toml` must be a nul-terminated string; `overrides` must point to `n_overrides` such
 * strings (or be null when `n_overrides` is 0); `out` must be writable.
 */
enum NlfracStatus nlfrac_config_from_toml(const char *toml,
                                          const char *const *overrides,
                                          size_t n_overrides,
                                          struct NlfracConfig **out);

/**
 * # Safety
 * `config` must come from [`nlfrac_config_from_toml`] and not be used afterwards.
 */
void nlfrac_config_free(struct NlfracConfig *config);

/**
 * Runs an experiment mode (`"forward"`, `"dn"`, `"linearize"`, `"runge"`,
 * `"invert-oracle"`, `"invert-exterior"`, `"verify-bounds"`) and writes its files and
 * manifest into `out_dir`.
 *
 * # Safety
 * Pointers must be valid; strings nul-terminated.
 */
enum NlfracStatus nlfrac_run(const struct NlfracConfig *config,
                             const char *mode,
                             const char *out_dir);

/**
 * Builds the grid `[-half_width, half_width]` with `n_points` points and windows
 * `W₁ = (w1_lo, w1_hi)`, `W₂ = (w2_lo, w2_hi)`, and assembles the operator of order `s`
 * with gradient order `t`.
 *
 * # Safety
 * `out` must be writable.
 */
enum NlfracStatus nlfrac_model_new(double half_width,
                                   size_t n_points,
                                   double w1_lo,
                                   double w1_hi,
                                   double w2_lo,
                                   double w2_hi,
                                   double s,
                                   double t,
                                   struct NlfracModel **out);

/**
 * # Safety
 * `config` must be valid and `out` writable.
 */
enum NlfracStatus nlfrac_model_from_config(const struct NlfracConfig *config,
                                           struct NlfracModel **out);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void nlfrac_model_free(struct NlfracModel *model);

/**
 * Number of grid points, or 0 for a null handle.
 *
 * # Safety
 * `model` must be valid or null.
 */
size_t nlfrac_model_n_points(const struct NlfracModel *model);

/**
 * Grid coordinates and the half-open index range `[omega_start, omega_end)` of Ω.
 *
 * # Safety
 * `x` must hold `len` doubles; the index pointers must be writable.
 */
enum NlfracStatus nlfrac_model_grid(const struct NlfracModel *model,
                                    double *x,
                                    size_t len,
                                    size_t *omega_start,
                                    size_t *omega_end);

/**
 * `out = A u` over the whole grid.
 *
 * # Safety
 * `u` and `out` must hold `len` doubles.
 */
enum NlfracStatus nlfrac_apply_laplacian(const struct NlfracModel *model,
                                         const double *u,
                                         double *out,
                                         size_t len);

/**
 * Coefficients of the configuration sampled on the model's grid.
 *
 * # Safety
 * Handles must be valid and `out` writable.
 */
enum NlfracStatus nlfrac_coefficients_from_config(const struct NlfracConfig *config,
                                                  const struct NlfracModel *model,
                                                  struct NlfracCoefficients **out);

/**
 * All-zero coefficients with exponent `m` and highest Taylor order `k_max`.
 *
 * # Safety
 * `model` must be valid and `out` writable.
 */
enum NlfracStatus nlfrac_coefficients_zero(const struct NlfracModel *model,
                                           uint32_t m,
                                           size_t k_max,
                                           struct NlfracCoefficients **out);

/**
 * Replaces `b` by the `len` values at the Ω points.
 *
 * # Safety
 * `coeffs` must be valid and `b` must hold `len` doubles.
 */
enum NlfracStatus nlfrac_coefficients_set_b(struct NlfracCoefficients *coeffs,
                                            const double *b,
                                            size_t len);

/**
 * # Safety
 * `coeffs` must come from this library and not be used afterwards.
 */
void nlfrac_coefficients_free(struct NlfracCoefficients *coeffs);

/**
 * Solves the forward problem for exterior data `f` (full grid, zero on Ω) by Picard
 * iteration. Writes the solution to `u` and the iteration count to `iterations` (may be null).
 *
 * # Safety
 * `f` and `u` must hold `len` doubles.
 */
enum NlfracStatus nlfrac_solve(const struct NlfracModel *model,
                               const struct NlfracCoefficients *coeffs,
                               const double *f,
                               double *u,
                               size_t len,
                               double tol,
                               size_t max_iter,
                               size_t *iterations);

/**
 * Exterior measurement `(-Δ)^s u_f` at every exterior point; `out` is zero on Ω.
 *
 * # Safety
 * `f` and `out` must hold `len` doubles.
 */
enum NlfracStatus nlfrac_dn_map(const struct NlfracModel *model,
                                const struct NlfracCoefficients *coeffs,
                                const double *f,
                                double *out,
                                size_t len,
                                double tol,
                                size_t max_iter);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NLFRAC_H */
