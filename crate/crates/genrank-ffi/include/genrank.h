#ifndef GENRANK_H
#define GENRANK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes mirroring the CLI exit codes, plus FFI-specific failures.
 */
typedef enum GrStatus {
  GrOk = 0,
  GrUsageError = 1,
  GrDataError = 2,
  GrNumericError = 3,
  GrNullPointer = 4,
  GrInvalidUtf8 = 5,
  GrBufferTooSmall = 6,
} GrStatus;

/**
 * Opaque ranker handle: a trained model plus its vocabulary.
 */
typedef struct GrRanker GrRanker;

/**
 * One scored (query, document) pair: the relevance score and the four
 * query-level uncertainty aggregates.
 */
typedef struct GrScore {
  /**
   * Sum of per-position log-probabilities (higher is more relevant).
   */
  double score;
  double unc_mean;
  double unc_variance;
  double unc_max;
  double unc_entropy;
  /**
   * 1 when any generation step hit the probability floor.
   */
  uint8_t floored;
} GrScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` (truncated if
 * needed, always NUL-terminated when `buf_len > 0`). Returns the full
 * message length in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must point to `buf_len` writable bytes, or be null.
 */
uintptr_t gr_last_error(char *buf, uintptr_t buf_len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gr_version(void);

/**
 * Open a ranker from a checkpoint file and a vocabulary file. On success
 * writes the handle through `out`; free it with [`gr_ranker_free`].
 *
 * # Safety
 * `checkpoint_path` and `vocab_path` must be valid NUL-terminated strings
 * and `out` a valid pointer.
 */
enum GrStatus gr_ranker_open(const char *checkpoint_path,
                             const char *vocab_path,
                             struct GrRanker **out);

/**
 * Release a handle returned by [`gr_ranker_open`]. Null is a no-op.
 *
 * # Safety
 * `ranker` must have come from [`gr_ranker_open`] and not be freed twice.
 */
void gr_ranker_free(struct GrRanker *ranker);

/**
 * Base vocabulary size of the loaded model (including specials); 0 for a
 * null handle.
 *
 * # Safety
 * `ranker` must be a live handle or null.
 */
uint64_t gr_ranker_vocab_size(const struct GrRanker *ranker);

/**
 * Score a (query, document) pair by teacher-forced generation
 * log-probability, with nucleus-entropy uncertainty at threshold
 * `nucleus_p` (0.95 is the standard setting).
 *
 * # Safety
 * `ranker` must be live; `query`/`doc` valid NUL-terminated strings;
 * `out` a valid pointer.
 */
enum GrStatus gr_ranker_score(const struct GrRanker *ranker,
                              const char *query,
                              const char *doc,
                              double nucleus_p,
                              struct GrScore *out);

/**
 * Greedily generate a query for `doc` (at most `max_len` tokens) into
 * `buf` as a space-joined NUL-terminated UTF-8 string. `written` (when
 * non-null) receives the byte length excluding the terminator.
 *
 * # Safety
 * `ranker` must be live; `doc` a valid NUL-terminated string; `buf` must
 * point to `buf_len` writable bytes; `written` must be valid or null.
 */
enum GrStatus gr_ranker_generate(const struct GrRanker *ranker,
                                 const char *doc,
                                 uint64_t max_len,
                                 char *buf,
                                 uintptr_t buf_len,
                                 uintptr_t *written);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* GENRANK_H */
