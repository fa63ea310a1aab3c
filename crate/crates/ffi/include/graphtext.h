#ifndef GRAPHTEXT_H
#define GRAPHTEXT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GtPromptKind {
  GT_PROMPT_KIND_REFINE = 0,
  GT_PROMPT_KIND_EXTRACT = 1,
} GtPromptKind;

/**
 * Result code of every fallible call.
 */
typedef enum GtStatus {
  GT_STATUS_OK = 0,
  /**
   * Null pointer, invalid UTF-8, out-of-range index or bad parameter.
   */
  GT_STATUS_ARGUMENT = 2,
  /**
   * Malformed or incompatible input data or artifacts.
   */
  GT_STATUS_FORMAT = 3,
  GT_STATUS_PROVIDER = 4,
  GT_STATUS_NUMERICAL = 5,
  GT_STATUS_IO = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  GT_STATUS_PANIC = 7,
} GtStatus;

/**
 * A trained classifier together with its word graph.
 */
typedef struct GtClassifier GtClassifier;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *gt_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *gt_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void gt_string_free(char *s);

/**
 * Tokenizes `input`; `*out_json` receives a JSON array of tokens.
 *
 * # Safety
 * `input` must be a valid C string and `out_json` a valid pointer.
 */
enum GtStatus gt_tokenize(const char *input, char **out_json);

/**
 * Parses an extraction response; `*out_json` receives
 * `{"doc_id", "none", "triples", "malformed"}`.
 *
 * # Safety
 * `response` must be a valid C string, `doc_id` a valid C string or null,
 * and `out_json` a valid pointer.
 */
enum GtStatus gt_parse_triples(const char *response, const char *doc_id, char **out_json);

/**
 * Fills the refinement or extraction prompt with `input`.
 *
 * # Safety
 * `input` must be a valid C string and `out` a valid pointer.
 */
enum GtStatus gt_render_prompt(enum GtPromptKind kind, const char *input, char **out);

/**
 * Loads a model and the graph artifact it was trained on.
 *
 * # Safety
 * Paths must be valid C strings and `out` a valid pointer. On success the
 * handle must be released with [`gt_classifier_free`].
 */
enum GtStatus gt_classifier_open(const char *model_path,
                                 const char *graph_path,
                                 struct GtClassifier **out);

/**
 * Releases a classifier. Null is ignored.
 *
 * # Safety
 * `h` must come from [`gt_classifier_open`] and not have been freed.
 */
void gt_classifier_free(struct GtClassifier *h);

/**
 * Number of classes, or 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
size_t gt_classifier_num_classes(const struct GtClassifier *h);

/**
 * Number of graph nodes, or 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
size_t gt_classifier_vocab_size(const struct GtClassifier *h);

/**
 * Name of class `class`.
 *
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum GtStatus gt_classifier_label(const struct GtClassifier *h, size_t class_, char **out);

/**
 * Classifies one document from its extraction response. `display_text` is
 * the document text (required when the graph pools over refined text; may
 * be null otherwise). Writes `probs_len` class probabilities to `probs`
 * (which must equal the class count) and the predicted class to `class_out`.
 *
 * # Safety
 * `h` must be a live handle, strings valid or null as documented, `probs`
 * valid for `probs_len` writes and `class_out` valid or null.
 */
enum GtStatus gt_classifier_predict(const struct GtClassifier *h,
                                    const char *response,
                                    const char *display_text,
                                    double *probs,
                                    size_t probs_len,
                                    size_t *class_out);

/**
 * Explains the prediction for one document; `*out_json` receives the
 * explanation (predicted class, logit, per-word contributions, highlights).
 *
 * # Safety
 * As for [`gt_classifier_predict`]; `out_json` must be a valid pointer.
 */
enum GtStatus gt_classifier_explain(const struct GtClassifier *h,
                                    const char *response,
                                    const char *display_text,
                                    char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRAPHTEXT_H */
