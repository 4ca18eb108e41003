#ifndef GTCN_H
#define GTCN_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GtcnStatus {
  GTCN_STATUS_OK = 0,
  GTCN_STATUS_NULL_POINTER = 1,
  GTCN_STATUS_INVALID_ARGUMENT = 2,
  GTCN_STATUS_IO = 3,
  GTCN_STATUS_FORMAT = 4,
  GTCN_STATUS_SHAPE = 5,
  GTCN_STATUS_NON_FINITE = 6,
  GTCN_STATUS_PANIC = 7,
  GTCN_STATUS_OTHER = 8,
} GtcnStatus;

/**
 * Opaque model handle.
 */
typedef struct GtcnHandle GtcnHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *gtcn_last_error_message(void);

/**
 * Loads a checkpoint. On success `*out` owns a handle to release with
 * [`gtcn_model_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GtcnStatus gtcn_model_load(const char *path, struct GtcnHandle **out_model);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `model` must come from [`gtcn_model_load`] and not be used afterwards.
 */
void gtcn_model_free(struct GtcnHandle *model);

/**
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum GtcnStatus gtcn_model_num_classes(const struct GtcnHandle *model, size_t *out_k);

/**
 * Input side length expected by [`gtcn_model_logits`].
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum GtcnStatus gtcn_model_resolution(const struct GtcnHandle *model, size_t *out_res);

/**
 * Classifier logits for `n` images laid out as n×res×res×3 floats in
 * [-1,1], channels last. Writes n×k values to `logits`.
 *
 * # Safety
 * `pixels` must hold `n·res·res·3` floats and `logits` room for
 * `logits_len` floats.
 */
enum GtcnStatus gtcn_model_logits(const struct GtcnHandle *model,
                                  const float *pixels,
                                  size_t n,
                                  float *logits,
                                  size_t logits_len);

/**
 * Half the margin of logit 0 over logit 1; `k` must be 2.
 *
 * # Safety
 * `logits` must hold `k` floats and `out` be valid.
 */
enum GtcnStatus gtcn_binary_score(const float *logits, size_t k, double *out_score);

/**
 * Weighted sum `w1·a + w2·b` of two scores.
 */
double gtcn_fuse_scores(double a, double b, double w1, double w2);

/**
 * # Safety
 * `a` and `b` must hold `na` and `nb` values and `out` be valid.
 */
enum GtcnStatus gtcn_fisher_j(const double *a,
                              size_t na,
                              const double *b,
                              size_t nb,
                              double *out_j);

/**
 * Equal error rate of `n` scores; `positive[i] != 0` marks the accepted class.
 *
 * # Safety
 * `scores` and `positive` must hold `n` entries and `out` be valid.
 */
enum GtcnStatus gtcn_eer(const double *scores, const uint8_t *positive, size_t n, double *out_eer);

/**
 * TAR at the largest achievable FAR not above `far`.
 *
 * # Safety
 * `scores` and `positive` must hold `n` entries and `out` be valid.
 */
enum GtcnStatus gtcn_tar_at_far(const double *scores,
                                const uint8_t *positive,
                                size_t n,
                                double far,
                                double *out_tar);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GTCN_H */
