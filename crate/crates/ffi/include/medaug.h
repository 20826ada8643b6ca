/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef MEDAUG_H
#define MEDAUG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MedaugStatus {
  MEDAUG_STATUS_OK = 0,
  MEDAUG_STATUS_NULL_POINTER = 1,
  MEDAUG_STATUS_INVALID_UTF8 = 2,
  MEDAUG_STATUS_INVALID_ARGUMENT = 3,
  MEDAUG_STATUS_IO = 4,
  MEDAUG_STATUS_CHECKPOINT = 5,
  MEDAUG_STATUS_PARSE = 6,
  MEDAUG_STATUS_GENERATION_STARVED = 7,
  MEDAUG_STATUS_PANIC = 8,
} MedaugStatus;

// Binary classifier loaded from a checkpoint.
typedef struct MedaugClassifier MedaugClassifier;

// Label-conditioned generator loaded from a checkpoint.
typedef struct MedaugGenerator MedaugGenerator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *medaug_last_error(void);

// Static, NUL-terminated crate version.
const char *medaug_version(void);

// Frees a string returned by this library. Null is a no-op.
//
// # Safety
// `s` must come from this library and not have been freed.
void medaug_string_free(char *s);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum MedaugStatus medaug_generator_load(const char *path, struct MedaugGenerator **out);

// # Safety
// `g` must come from [`medaug_generator_load`] and not have been freed.
void medaug_generator_free(struct MedaugGenerator *g);

// Samples one body for `label` (0 or 1) starting with the words of
// `context` (may be null). The text is written to `out` and must be
// released with [`medaug_string_free`].
//
// # Safety
// `g` must be a live generator, `context` null or NUL-terminated, `out`
// writable.
enum MedaugStatus medaug_generator_sample(const struct MedaugGenerator *g,
                                          uint8_t label,
                                          const char *context,
                                          double temperature,
                                          uintptr_t top_k,
                                          uintptr_t max_len,
                                          uint64_t seed,
                                          char **out);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum MedaugStatus medaug_classifier_load(const char *path, struct MedaugClassifier **out);

// # Safety
// `c` must come from [`medaug_classifier_load`] and not have been freed.
void medaug_classifier_free(struct MedaugClassifier *c);

// Positive-class probability of `text`.
//
// # Safety
// `c` must be a live classifier, `text` NUL-terminated, `out` writable.
enum MedaugStatus medaug_classifier_predict(const struct MedaugClassifier *c,
                                            const char *text,
                                            double *out);

// Area under the ROC curve with tied scores counted half.
//
// # Safety
// `scores` and `labels` must point to `n` readable elements, `out` writable.
enum MedaugStatus medaug_auroc(const double *scores,
                               const uint8_t *labels,
                               uintptr_t n,
                               double *out);

// Average precision.
//
// # Safety
// As [`medaug_auroc`].
enum MedaugStatus medaug_auprc(const double *scores,
                               const uint8_t *labels,
                               uintptr_t n,
                               double *out);

// Highest recall at precision of at least 0.8.
//
// # Safety
// As [`medaug_auroc`].
enum MedaugStatus medaug_rp80(const double *scores,
                              const uint8_t *labels,
                              uintptr_t n,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEDAUG_H */
