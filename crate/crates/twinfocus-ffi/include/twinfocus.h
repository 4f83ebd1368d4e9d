#ifndef TWINFOCUS_H
#define TWINFOCUS_H

/* Generated by cbindgen from crates/twinfocus-ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TfMediumKind {
  TF_MEDIUM_KIND_IID_COMPLEX = 0,
  TF_MEDIUM_KIND_PHASE_SCREEN_FOURIER = 1,
  TF_MEDIUM_KIND_DFT = 2,
} TfMediumKind;

/**
 * Result code of every fallible call.
 */
typedef enum TfStatus {
  TF_STATUS_OK = 0,
  TF_STATUS_NULL_POINTER = 1,
  TF_STATUS_INVALID_ARGUMENT = 2,
  TF_STATUS_DIMENSION = 3,
  TF_STATUS_DEGENERATE = 4,
  TF_STATUS_IO = 5,
  TF_STATUS_FORMAT = 6,
  TF_STATUS_CONFIG = 7,
  TF_STATUS_BUFFER_TOO_SMALL = 8,
  TF_STATUS_PANIC = 9,
} TfStatus;

/**
 * Opaque scattering matrix.
 */
typedef struct TfMedium TfMedium;

/**
 * Opaque two-photon state.
 */
typedef struct TfState TfState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated).
 * Returns the message length in bytes excluding the terminator; when
 * `buf_len` is too small the message is truncated.
 *
 * # Safety
 * `buf` must be null or point to `buf_len` writable bytes.
 */
size_t tf_last_error_message(char *buf, size_t buf_len);

/**
 * Static NUL-terminated version string.
 */
const char *tf_version(void);

/**
 * Schmidt number of the double-Gaussian state.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum TfStatus tf_schmidt_number(double sigma_r, double sigma_k, double *out);

/**
 * Maximizer in `[0, 2 pi)` of `c + a cos(2t + theta_a) + b cos(t + theta_b)`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum TfStatus tf_optimal_phase(double a,
                               double b,
                               double c,
                               double theta_a,
                               double theta_b,
                               double *out);

/**
 * Generate a medium for a `rows x cols` modulator grid and an
 * `out_h x out_w` camera.
 *
 * # Safety
 * `out` must be null or valid for writes; on success it receives a handle
 * to release with [`tf_medium_free`].
 */
enum TfStatus tf_medium_new(enum TfMediumKind kind,
                            uint64_t seed,
                            size_t rows,
                            size_t cols,
                            double pitch,
                            size_t out_h,
                            size_t out_w,
                            struct TfMedium **out);

/**
 * # Safety
 * `m` must be null or a handle from [`tf_medium_new`] not freed before.
 */
void tf_medium_free(struct TfMedium *m);

/**
 * Number of output pixels and input modes.
 *
 * # Safety
 * `m` must be a live handle; `n_out` and `n_in` null or valid for writes.
 */
enum TfStatus tf_medium_dims(const struct TfMedium *m, size_t *n_out, size_t *n_in);

/**
 * Double-Gaussian two-photon state on a `rows x cols` grid.
 *
 * # Safety
 * `out` must be null or valid for writes; on success it receives a handle
 * to release with [`tf_state_free`].
 */
enum TfStatus tf_state_double_gaussian(size_t rows,
                                       size_t cols,
                                       double pitch,
                                       double sigma_r,
                                       double sigma_k,
                                       struct TfState **out);

/**
 * # Safety
 * `s` must be null or a handle from a `tf_state_*` constructor not freed before.
 */
void tf_state_free(struct TfState *s);

/**
 * Sum-coordinate projection of the coincidences for phases `theta`
 * (`n_modes` values), written row-major into `out` of
 * `(2h - 1) * (2w - 1)` values.
 *
 * # Safety
 * Handles must be live; `theta` must hold `n_theta` values and `out`
 * must hold `out_len` writable values.
 */
enum TfStatus tf_sum_projection(const struct TfState *state,
                                const struct TfMedium *medium,
                                const double *theta,
                                size_t n_theta,
                                double *out,
                                size_t out_len);

/**
 * Random-partition optimization of the sum-coordinate target at
 * `(row, col)` starting from a flat mask. The final phases go to
 * `theta_out` (`n_theta` = number of modes) and the final target value
 * to `final_value`.
 *
 * # Safety
 * Handles must be live; `theta_out` must hold `n_theta` writable values;
 * `final_value` must be null or valid for writes.
 */
enum TfStatus tf_optimize_sum_coordinate(const struct TfState *state,
                                         const struct TfMedium *medium,
                                         size_t row,
                                         size_t col,
                                         size_t steps,
                                         double fraction,
                                         uint64_t seed,
                                         double *theta_out,
                                         size_t n_theta,
                                         double *final_value);

/**
 * Run a scenario from a JSON config; `out_dir` (nullable) overrides the
 * configured output directory. The manifest lands in that directory.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out_dir` null or one.
 */
enum TfStatus tf_run_scenario(const char *config_json, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TWINFOCUS_H */
