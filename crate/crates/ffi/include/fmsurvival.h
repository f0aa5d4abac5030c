#ifndef FMSURVIVAL_H
#define FMSURVIVAL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FmsStatus {
  FMS_STATUS_OK = 0,
  FMS_STATUS_NULL_POINTER = 1,
  FMS_STATUS_INVALID_ARGUMENT = 2,
  FMS_STATUS_IO = 3,
  FMS_STATUS_PARSE = 4,
  FMS_STATUS_UNDEFINED = 5,
  FMS_STATUS_PANIC = 6,
} FmsStatus;

// A loaded factorization-machine checkpoint.
typedef struct FmsModel FmsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *fms_last_error(void);

// Library version as a static NUL-terminated string.
const char *fms_version(void);

// Loads a checkpoint file into a new handle stored in `*out`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum FmsStatus fms_model_load(const char *path, struct FmsModel **out);

// Releases a handle from [`fms_model_load`]. NULL is ignored.
//
// # Safety
// `model` must come from [`fms_model_load`] and not be freed twice.
void fms_model_free(struct FmsModel *model);

// Number of features (users, items and attribute values) the model covers.
//
// # Safety
// `model` must be a live handle or NULL (which yields 0).
size_t fms_model_dimension(const struct FmsModel *model);

// Latent factors per feature.
//
// # Safety
// `model` must be a live handle or NULL (which yields 0).
size_t fms_model_factors(const struct FmsModel *model);

// Seed the checkpoint was trained with.
//
// # Safety
// `model` must be a live handle or NULL (which yields 0).
uint64_t fms_model_seed(const struct FmsModel *model);

// FM score of the binary feature set `active[0..len]`.
//
// # Safety
// `model` must be a live handle, `active` must hold `len` indices and
// `out` must be writable.
enum FmsStatus fms_model_score(const struct FmsModel *model,
                               const size_t *active,
                               size_t len,
                               double *out);

// Scores each of `items[0..num_items]` for one user described by
// `user_features[0..num_user_features]`, writing `scores[0..num_items]`.
//
// # Safety
// Every array must hold the stated number of elements; `scores` must be
// writable.
enum FmsStatus fms_model_score_items(const struct FmsModel *model,
                                     const size_t *user_features,
                                     size_t num_user_features,
                                     const size_t *items,
                                     size_t num_items,
                                     double *scores);

// Macro-averaged F1 of `predictions` against `truth`, both of length `len`.
//
// # Safety
// Both arrays must hold `len` labels and `out` must be writable.
enum FmsStatus fms_macro_f1(const size_t *predictions,
                            const size_t *truth,
                            size_t len,
                            double *out);

// `(variant - base) / base`; [`FmsStatus::Undefined`] when `base` is 0.
//
// # Safety
// `out` must be writable.
enum FmsStatus fms_percent_change(double base, double variant, double *out);

// Shannon entropy in bits of per-item recommendation counts.
//
// # Safety
// `counts` must hold `len` values and `out` must be writable.
enum FmsStatus fms_entropy(const uint64_t *counts, size_t len, double *out);

// `1 - Gini` of per-item recommendation counts over the whole catalog.
//
// # Safety
// `counts` must hold `len` values and `out` must be writable.
enum FmsStatus fms_gini_diversity(const uint64_t *counts, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FMSURVIVAL_H */
