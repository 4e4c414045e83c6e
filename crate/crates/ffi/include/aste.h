#ifndef ASTE_H
#define ASTE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AsteStatus {
  ASTE_STATUS_OK = 0,
  ASTE_STATUS_NULL_POINTER = 1,
  ASTE_STATUS_INVALID_UTF8 = 2,
  ASTE_STATUS_IO = 3,
  ASTE_STATUS_FORMAT = 4,
  ASTE_STATUS_EMPTY_ANNOTATION = 5,
  ASTE_STATUS_DANGLING_GROUP = 6,
  ASTE_STATUS_OVERLAP = 7,
  ASTE_STATUS_INDEX = 8,
  ASTE_STATUS_DIMENSION = 9,
  ASTE_STATUS_SHAPE = 10,
  ASTE_STATUS_CONFIG = 11,
  ASTE_STATUS_ALIGNMENT = 12,
  ASTE_STATUS_COMPATIBILITY = 13,
  ASTE_STATUS_CHECKPOINT = 14,
  ASTE_STATUS_PANIC = 15,
} AsteStatus;

/**
 * Parsed annotated corpus.
 */
typedef struct AsteCorpus AsteCorpus;

/**
 * Loaded pair of stage checkpoints.
 */
typedef struct AstePipeline AstePipeline;

typedef struct AsteCorpusStats {
  size_t sentences;
  size_t pairs;
  size_t aspects;
  size_t opinions;
} AsteCorpusStats;

typedef struct AsteReport {
  double precision;
  double recall;
  double f1;
  size_t num_pred;
  size_t num_gold;
  size_t num_correct;
} AsteReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next library call on the same thread.
 */
const char *aste_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *aste_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void aste_string_free(char *s);

/**
 * Loads both stage checkpoints into a pipeline handle.
 *
 * # Safety
 * Paths must be NUL-terminated; `out` must be writable.
 */
enum AsteStatus aste_pipeline_load(const char *ckpt1, const char *ckpt2, struct AstePipeline **out);

/**
 * # Safety
 * `p` must come from [`aste_pipeline_load`] and not be freed twice.
 */
void aste_pipeline_free(struct AstePipeline *p);

/**
 * Predicts one whitespace-tokenized sentence. `heads` holds one 1-based head
 * index per token (0 for the root) or is null for no parse. On success `out`
 * receives a JSON object to release with [`aste_string_free`].
 *
 * # Safety
 * `heads` must point to `n_heads` values when non-null.
 */
enum AsteStatus aste_pipeline_predict(const struct AstePipeline *p,
                                      const char *sentence,
                                      const size_t *heads,
                                      size_t n_heads,
                                      char **out);

/**
 * Predicts every sentence of a corpus. `out` receives JSON lines, one per
 * sentence, with ids equal to corpus positions.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum AsteStatus aste_pipeline_predict_corpus(const struct AstePipeline *p,
                                             const struct AsteCorpus *corpus,
                                             char **out);

/**
 * Reads an annotated corpus, attaching head indices when `dep` is non-null.
 *
 * # Safety
 * Paths must be NUL-terminated; `out` must be writable.
 */
enum AsteStatus aste_corpus_read(const char *path, const char *dep, struct AsteCorpus **out);

/**
 * # Safety
 * `c` must come from [`aste_corpus_read`] and not be freed twice.
 */
void aste_corpus_free(struct AsteCorpus *c);

/**
 * # Safety
 * `c` must be live; `out` must be writable.
 */
enum AsteStatus aste_corpus_stats(const struct AsteCorpus *c, struct AsteCorpusStats *out);

/**
 * Scores a prediction file against a gold file under one mode (`unified`,
 * `aspect_only`, `opinion`, `pair` or `triplet`). Either file may be an
 * annotated corpus or prediction JSON lines.
 *
 * # Safety
 * Strings must be NUL-terminated; `out` must be writable.
 */
enum AsteStatus aste_evaluate_files(const char *pred,
                                    const char *gold,
                                    const char *mode,
                                    struct AsteReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ASTE_H */
