/* C interface for the ember warm-start search engine. */

#pragma once

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum EmberStatus {
  EMBER_STATUS_OK = 0,
  EMBER_STATUS_NULL_ARGUMENT = 1,
  EMBER_STATUS_INVALID_UTF8 = 2,
  EMBER_STATUS_PARSE_ERROR = 3,
  EMBER_STATUS_INVALID_INPUT = 4,
  EMBER_STATUS_IO_ERROR = 5,
  EMBER_STATUS_PANIC = 6,
} EmberStatus;

/**
 * Opaque search-space handle.
 */
typedef struct EmberSpace EmberSpace;

/**
 * Opaque sampler-state handle.
 */
typedef struct EmberState EmberState;

/**
 * Opaque experience-store handle.
 */
typedef struct EmberStore EmberStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a heap string; free with `ember_string_free`.
 */
char *ember_version(void);

/**
 * Message of the last error on this thread (empty string when none);
 * free with `ember_string_free`.
 */
char *ember_last_error_message(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must come from an ember call and must not be freed twice.
 */
void ember_string_free(char *s);

/**
 * Parse a space definition document (TOML).
 *
 * # Safety
 * `text` must be NUL-terminated; `out` must be a valid pointer.
 */
enum EmberStatus ember_space_parse(const char *text, struct EmberSpace **out);

/**
 * # Safety
 * `space` must come from `ember_space_parse` and not be freed twice.
 */
void ember_space_free(struct EmberSpace *space);

/**
 * Number of fine-tuning methods in the space.
 *
 * # Safety
 * `space` and `out` must be valid pointers.
 */
enum EmberStatus ember_space_method_count(const struct EmberSpace *space, uintptr_t *out);

/**
 * Uniform initial sampler state over a space.
 *
 * # Safety
 * `space` and `out` must be valid pointers.
 */
enum EmberStatus ember_state_init_uniform(const struct EmberSpace *space, struct EmberState **out);

/**
 * # Safety
 * `state` must come from this library and not be freed twice.
 */
void ember_state_free(struct EmberState *state);

/**
 * Copy the method marginal into `buf` (capacity `cap`); `written` receives
 * the vector length. Fails with InvalidInput when `cap` is too small.
 *
 * # Safety
 * `buf` must point to at least `cap` doubles.
 */
enum EmberStatus ember_state_method_marginal(const struct EmberState *state,
                                             double *buf,
                                             uintptr_t cap,
                                             uintptr_t *written);

/**
 * Serialize a sampler state to JSON.
 *
 * # Safety
 * Pointers must be valid; free the string with `ember_string_free`.
 */
enum EmberStatus ember_state_to_json(const struct EmberState *state, char **out);

/**
 * Deserialize a sampler state from JSON.
 *
 * # Safety
 * Pointers must be valid.
 */
enum EmberStatus ember_state_from_json(const char *json, struct EmberState **out);

/**
 * Draw one configuration (deterministic per seed) as a JSON document.
 *
 * # Safety
 * Pointers must be valid; free the string with `ember_string_free`.
 */
enum EmberStatus ember_state_sample_json(const struct EmberSpace *space,
                                         const struct EmberState *state,
                                         uint64_t seed,
                                         char **out);

/**
 * Open (or create) an experience store file.
 *
 * # Safety
 * Pointers must be valid.
 */
enum EmberStatus ember_store_open(const char *path, struct EmberStore **out);

/**
 * # Safety
 * `store` must come from `ember_store_open` and not be freed twice.
 */
void ember_store_free(struct EmberStore *store);

/**
 * Count records of a family, optionally excluding one task
 * (`exclude_task` may be NULL).
 *
 * # Safety
 * Pointers must be valid.
 */
enum EmberStatus ember_store_count(const struct EmberStore *store,
                                   const char *family,
                                   const char *exclude_task,
                                   uintptr_t *out);

/**
 * Append one experience from its JSON representation; `out_id` receives the
 * assigned record id.
 *
 * # Safety
 * Pointers must be valid.
 */
enum EmberStatus ember_store_append_json(struct EmberStore *store,
                                         const char *record_json,
                                         uint64_t *out_id);

/**
 * Build the experience-aware prior from stored experiences. `prior_toml`
 * holds the prior parameters; `exclude_task` may be NULL. On success
 * `out_state` owns the warmed state and `out_report_json` the
 * per-experience (distance, utility, alpha) report.
 *
 * # Safety
 * Pointers must be valid.
 */
enum EmberStatus ember_build_prior_json(const struct EmberSpace *space,
                                        const struct EmberStore *store,
                                        const char *family,
                                        const char *exclude_task,
                                        const char *features_json,
                                        const char *system_json,
                                        const char *prior_toml,
                                        struct EmberState **out_state,
                                        char **out_report_json);

/**
 * The naive kNN warm-start baseline over the same store.
 *
 * # Safety
 * Pointers must be valid.
 */
enum EmberStatus ember_knn_prior_json(const struct EmberSpace *space,
                                      const struct EmberStore *store,
                                      const char *family,
                                      const char *exclude_task,
                                      uintptr_t k,
                                      const char *features_json,
                                      const char *system_json,
                                      struct EmberState **out_state,
                                      char **out_report_json);

/**
 * Run the sample-evaluate-update loop on one task of a surrogate family
 * (`family_toml` is a family spec document). `max_evaluations` 0 means
 * unlimited; `wall_clock_limit_secs` <= 0 means unlimited; at least one
 * limit must be set. Returns the full trace plus its summary as JSON.
 *
 * # Safety
 * Pointers must be valid.
 */
enum EmberStatus ember_run_surrogate_search_json(const struct EmberSpace *space,
                                                 const struct EmberState *initial_state,
                                                 const char *family_toml,
                                                 const char *task_id,
                                                 uint64_t max_evaluations,
                                                 double wall_clock_limit_secs,
                                                 double per_eval_timeout_secs,
                                                 uintptr_t batch_size,
                                                 uint64_t seed,
                                                 char **out_trace_json);

/**
 * Total-variation distance between two probability vectors of length `len`.
 *
 * # Safety
 * `p` and `q` must point to at least `len` doubles.
 */
enum EmberStatus ember_tv_distance(const double *p, const double *q, uintptr_t len, double *out);

/**
 * ROUGE-L F1 between two texts, using the library tokenizer.
 *
 * # Safety
 * Pointers must be valid.
 */
enum EmberStatus ember_rouge_l_f1(const char *candidate, const char *reference, double *out);

/**
 * Extract label-based meta-features from `label TAB text` lines; returns
 * the feature vector as JSON.
 *
 * # Safety
 * Pointers must be valid.
 */
enum EmberStatus ember_extract_label_features_json(const char *data, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
