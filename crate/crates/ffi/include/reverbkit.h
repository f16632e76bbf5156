#ifndef REVERBKIT_H
#define REVERBKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RkStatus {
  RK_STATUS_OK = 0,
  RK_STATUS_NULL_POINTER = 1,
  RK_STATUS_INVALID_ARGUMENT = 2,
  RK_STATUS_SHAPE_MISMATCH = 3,
  RK_STATUS_IO = 4,
  RK_STATUS_FORMAT = 5,
  RK_STATUS_UNTRAINED = 6,
  RK_STATUS_SILENT = 7,
  RK_STATUS_INSUFFICIENT_DECAY = 8,
  RK_STATUS_NUMERIC = 9,
  /**
   * A Rust panic was caught at the boundary.
   */
  RK_STATUS_INTERNAL = 10,
} RkStatus;

/**
 * Uniformly partitioned streaming convolver.
 */
typedef struct RkConvolver RkConvolver;

/**
 * A loaded generator model.
 */
typedef struct RkModel RkModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code.
 */
const char *rk_status_name(enum RkStatus status);

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `cap`). Returns the full message length
 * including the terminator, 0 if there is none.
 *
 * # Safety
 * `buf` must be null or valid for `cap` writes.
 */
size_t rk_last_error(char *buf, size_t cap);

/**
 * Loads a checkpoint written by the `reverbkit train` command.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RkStatus rk_model_load(const char *path, struct RkModel **out);

/**
 * # Safety
 * `model` must be null or come from [`rk_model_load`], and not be used
 * afterwards.
 */
void rk_model_free(struct RkModel *model);

/**
 * Side of the square input images.
 *
 * # Safety
 * `model` must be a live handle.
 */
size_t rk_model_image_size(const struct RkModel *model);

/**
 * Samples in a generated impulse response.
 *
 * # Safety
 * `model` must be a live handle.
 */
size_t rk_model_ir_length(const struct RkModel *model);

/**
 * # Safety
 * `model` must be a live handle.
 */
uint32_t rk_model_sample_rate(const struct RkModel *model);

/**
 * Generates an impulse response.
 *
 * `rgb` is planar `[3][size][size]` in [0, 1]; `depth` is `[size][size]`
 * in [0, 1] and may be null when `use_depth_override` is set, in which
 * case every depth value is `depth_override`. `out` receives
 * [`rk_model_ir_length`] samples.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum RkStatus rk_model_infer(const struct RkModel *model,
                             const float *rgb,
                             const float *depth,
                             uint64_t seed,
                             bool use_depth_override,
                             float depth_override,
                             float *out,
                             size_t out_len);

/**
 * Broadband T60 of an impulse response, in seconds.
 *
 * # Safety
 * `samples` must be valid for `len` reads; `out_t60` must be writable.
 */
enum RkStatus rk_estimate_t60(const float *samples,
                              size_t len,
                              uint32_t sample_rate,
                              double *out_t60);

/**
 * # Safety
 * `ir` must be valid for `ir_len` reads; `out` must be writable.
 */
enum RkStatus rk_convolver_new(const float *ir,
                               size_t ir_len,
                               uint32_t sample_rate,
                               size_t block_size,
                               struct RkConvolver **out);

/**
 * # Safety
 * `conv` must be a live handle.
 */
size_t rk_convolver_block_size(const struct RkConvolver *conv);

/**
 * Consumes one block of `len` (= block size) input samples and writes the
 * same number of output samples.
 *
 * # Safety
 * `input` and `output` must be valid for `len` elements and must not
 * overlap.
 */
enum RkStatus rk_convolver_process(struct RkConvolver *conv,
                                   const float *input,
                                   float *output,
                                   size_t len);

/**
 * Clears the convolver history.
 *
 * # Safety
 * `conv` must be a live handle.
 */
enum RkStatus rk_convolver_reset(struct RkConvolver *conv);

/**
 * # Safety
 * `conv` must be null or come from [`rk_convolver_new`], and not be used
 * afterwards.
 */
void rk_convolver_free(struct RkConvolver *conv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REVERBKIT_H */
