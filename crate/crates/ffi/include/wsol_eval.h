#ifndef WSOL_EVAL_H
#define WSOL_EVAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WsolNormalization {
  WSOL_NORMALIZATION_MIN_MAX = 0,
  WSOL_NORMALIZATION_MAX = 1,
  WSOL_NORMALIZATION_NONE = 2,
} WsolNormalization;

typedef enum WsolStatus {
  WSOL_STATUS_OK = 0,
  WSOL_STATUS_NULL_POINTER = 1,
  WSOL_STATUS_INVALID_ARGUMENT = 2,
  WSOL_STATUS_DIMENSION_MISMATCH = 3,
  WSOL_STATUS_NON_FINITE = 4,
  WSOL_STATUS_UNCALIBRATABLE = 5,
  WSOL_STATUS_EMPTY_INPUT = 6,
  WSOL_STATUS_NO_FOREGROUND = 7,
  WSOL_STATUS_IO = 8,
  WSOL_STATUS_PANIC = 9,
} WsolStatus;

typedef enum WsolBoxMetric {
  WSOL_BOX_METRIC_MAX_BOX_ACC = 0,
  WSOL_BOX_METRIC_MAX_BOX_ACC_V2 = 1,
} WsolBoxMetric;

typedef struct WsolBoxEvaluator WsolBoxEvaluator;

typedef struct WsolMaskEvaluator WsolMaskEvaluator;

/**
 * Evaluation settings. [`wsol_default_options`] fills in the defaults.
 */
typedef struct WsolEvalOptions {
  /**
   * Threshold spacing; ignored when `exact_thresholds` is set.
   */
  double grid_spacing;
  bool exact_thresholds;
  /**
   * 4 or 8.
   */
  uint32_t connectivity;
  enum WsolNormalization normalization;
  /**
   * Pick one threshold for all IoU levels of MaxBoxAccV2.
   */
  bool shared_tau;
} WsolEvalOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Default options: grid spacing 0.001, 8-connectivity, min-max normalization,
 * per-delta thresholds.
 */
struct WsolEvalOptions wsol_default_options(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *wsol_version(void);

/**
 * Message of the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *wsol_last_error_message(void);

/**
 * Creates a box evaluator. `options` may be NULL for the defaults.
 *
 * # Safety
 * `out` must be a valid pointer; `options` NULL or valid.
 */
enum WsolStatus wsol_box_evaluator_new(const struct WsolEvalOptions *options,
                                       struct WsolBoxEvaluator **out);

/**
 * Adds one image: a `height x width` score map and `n_boxes` boxes given as
 * `x0, y0, x1, y1` quadruples (half-open pixel coordinates).
 *
 * # Safety
 * `evaluator` must come from [`wsol_box_evaluator_new`]; `scores` must hold
 * `height * width` values and `boxes` `4 * n_boxes` values.
 */
enum WsolStatus wsol_box_evaluator_add(struct WsolBoxEvaluator *evaluator,
                                       const double *scores,
                                       size_t height,
                                       size_t width,
                                       const uint32_t *boxes,
                                       size_t n_boxes);

/**
 * Number of images added so far, or 0 for NULL.
 *
 * # Safety
 * `evaluator` must be NULL or come from [`wsol_box_evaluator_new`].
 */
size_t wsol_box_evaluator_len(const struct WsolBoxEvaluator *evaluator);

/**
 * Evaluates the added images. `deltas` may be NULL with `n_deltas == 0` for
 * the metric's default IoU thresholds (0.5, or 0.3/0.5/0.7 for V2). The
 * optional `per_delta_value` and `per_delta_tau` arrays receive one entry
 * per IoU threshold and must then hold `n_deltas` (or the default count:
 * 1 or 3) elements.
 *
 * # Safety
 * Pointers must be valid for the sizes described above.
 */
enum WsolStatus wsol_box_evaluator_evaluate(const struct WsolBoxEvaluator *evaluator,
                                            enum WsolBoxMetric metric,
                                            const double *deltas,
                                            size_t n_deltas,
                                            double *value,
                                            double *per_delta_value,
                                            double *per_delta_tau);

/**
 * # Safety
 * `evaluator` must be NULL or come from [`wsol_box_evaluator_new`], and must
 * not be used afterwards.
 */
void wsol_box_evaluator_free(struct WsolBoxEvaluator *evaluator);

/**
 * Creates a mask evaluator. `options` may be NULL for the defaults.
 *
 * # Safety
 * `out` must be a valid pointer; `options` NULL or valid.
 */
enum WsolStatus wsol_mask_evaluator_new(const struct WsolEvalOptions *options,
                                        struct WsolMaskEvaluator **out);

/**
 * Adds one image: scores plus a 0/1 foreground mask and an optional 0/1
 * ignore mask (NULL for none), all `height x width`.
 *
 * # Safety
 * `evaluator` must come from [`wsol_mask_evaluator_new`]; buffers must hold
 * `height * width` elements.
 */
enum WsolStatus wsol_mask_evaluator_add(struct WsolMaskEvaluator *evaluator,
                                        const double *scores,
                                        size_t height,
                                        size_t width,
                                        const uint8_t *mask,
                                        const uint8_t *ignore);

/**
 * # Safety
 * `evaluator` must be NULL or come from [`wsol_mask_evaluator_new`].
 */
size_t wsol_mask_evaluator_len(const struct WsolMaskEvaluator *evaluator);

/**
 * Computes PxAP over all added images and keeps the PR curve for
 * [`wsol_mask_evaluator_curve`].
 *
 * # Safety
 * `evaluator` must come from [`wsol_mask_evaluator_new`]; `pxap` must be
 * valid.
 */
enum WsolStatus wsol_mask_evaluator_evaluate(struct WsolMaskEvaluator *evaluator, double *pxap);

/**
 * Number of thresholds in the last evaluated curve, 0 if none.
 *
 * # Safety
 * `evaluator` must be NULL or come from [`wsol_mask_evaluator_new`].
 */
size_t wsol_mask_evaluator_curve_len(const struct WsolMaskEvaluator *evaluator);

/**
 * Copies the last curve in ascending threshold order into three arrays of
 * `len` elements, which must equal [`wsol_mask_evaluator_curve_len`].
 *
 * # Safety
 * Output pointers must be valid for `len` doubles.
 */
enum WsolStatus wsol_mask_evaluator_curve(const struct WsolMaskEvaluator *evaluator,
                                          double *tau,
                                          double *precision,
                                          double *recall,
                                          size_t len);

/**
 * # Safety
 * `evaluator` must be NULL or come from [`wsol_mask_evaluator_new`], and must
 * not be used afterwards.
 */
void wsol_mask_evaluator_free(struct WsolMaskEvaluator *evaluator);

/**
 * Kendall tau-b between two rankings of `n` items.
 *
 * # Safety
 * `a` and `b` must hold `n` doubles; `out` must be valid.
 */
enum WsolStatus wsol_kendall_tau(const double *a, const double *b, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WSOL_EVAL_H */
