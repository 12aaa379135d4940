#ifndef XDEEPFM_H
#define XDEEPFM_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum XdfmStatus {
  XDFM_STATUS_OK = 0,
  XDFM_STATUS_NULL_POINTER = 1,
  XDFM_STATUS_INVALID_ARGUMENT = 2,
  XDFM_STATUS_IO = 3,
  XDFM_STATUS_CHECKPOINT = 4,
  XDFM_STATUS_DIMENSION = 5,
  XDFM_STATUS_LOOKUP = 6,
  XDFM_STATUS_METRIC = 7,
  XDFM_STATUS_INTERNAL = 8,
  XDFM_STATUS_PANIC = 9,
} XdfmStatus;

// A model: spec, parameters and, when loaded from a checkpoint written by
// training, the feature vocabulary.
typedef struct XdfmModel XdfmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *xdfm_version(void);

// Message of the last failure on this thread, or null if none. The pointer
// stays valid until the next failing call on the same thread.
const char *xdfm_last_error(void);

// Creates a freshly initialized model from a preset name (`lr`, `fm`,
// `dnn`, `cin`, `crossnet`, `dcn`, `deepfm`, `xdeepfm`) with default
// hyper-parameters.
//
// # Safety
// `preset` must be a NUL-terminated string; `out` must be writable.
enum XdfmStatus xdfm_model_new(const char *preset,
                               size_t num_fields,
                               size_t num_features,
                               uint64_t seed,
                               struct XdfmModel **out);

// Loads a checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum XdfmStatus xdfm_model_load(const char *path, struct XdfmModel **out);

// Writes the model as a checkpoint.
//
// # Safety
// `model` must come from this library; `path` must be NUL-terminated.
enum XdfmStatus xdfm_model_save(const struct XdfmModel *model, const char *path);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void xdfm_model_free(struct XdfmModel *model);

// Number of fields `m`, or 0 for a null handle.
//
// # Safety
// `model` must be null or come from this library.
size_t xdfm_model_num_fields(const struct XdfmModel *model);

// Size of the feature id space, or 0 for a null handle.
//
// # Safety
// `model` must be null or come from this library.
size_t xdfm_model_num_features(const struct XdfmModel *model);

// Total trainable and frozen parameter count, or 0 for a null handle.
//
// # Safety
// `model` must be null or come from this library.
size_t xdfm_model_num_parameters(const struct XdfmModel *model);

// Feature id of a raw value in `field`; unseen values map to the field's
// out-of-vocabulary id. Fails with `LOOKUP` when the model carries no
// vocabulary.
//
// # Safety
// `model` must come from this library; `value` must be NUL-terminated;
// `out_id` must be writable.
enum XdfmStatus xdfm_model_feature_id(const struct XdfmModel *model,
                                      size_t field,
                                      const char *value,
                                      size_t *out_id);

// Scores `n` instances given in compressed sparse form. With `m` fields,
// `offsets` has `n·m + 1` entries and the ids active in field `f` of
// instance `i` are `ids[offsets[i·m + f] .. offsets[i·m + f + 1]]`.
// Writes `n` click probabilities to `out`.
//
// # Safety
// `offsets`, `ids` and `out` must point to arrays of the stated lengths.
enum XdfmStatus xdfm_model_predict(const struct XdfmModel *model,
                                   size_t n,
                                   const size_t *offsets,
                                   const size_t *ids,
                                   size_t num_ids,
                                   double *out);

// Area under the ROC curve, ties counted one half.
//
// # Safety
// `scores` and `labels` must point to `n` elements; `out` must be writable.
enum XdfmStatus xdfm_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

// Mean binary cross-entropy with predictions clamped away from 0 and 1.
//
// # Safety
// `preds` and `labels` must point to `n` elements; `out` must be writable.
enum XdfmStatus xdfm_logloss(const double *preds, const uint8_t *labels, size_t n, double *out);

// Runs the built-in verification checks: a comma-separated subset of
// `collinearity`, `polynomial`, `params`, `fm_reduction`, `gradients`, or
// all of them when `checks` is null. Sets `*passed` to 1 when every check
// passes and 0 otherwise.
//
// # Safety
// `checks` must be null or NUL-terminated; `passed` must be writable.
enum XdfmStatus xdfm_verify(const char *checks, uint64_t seed, int *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* XDEEPFM_H */
