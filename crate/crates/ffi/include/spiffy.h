#ifndef SPIFFY_H
#define SPIFFY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdint.h>
#include <stddef.h>
#include <stdbool.h>

typedef enum SpiffyScheduleMode {
  SPIFFY_SCHEDULE_MODE_FIXED = 0,
  SPIFFY_SCHEDULE_MODE_THRESHOLD = 1,
} SpiffyScheduleMode;

typedef enum SpiffyStatus {
  SPIFFY_STATUS_OK = 0,
  SPIFFY_STATUS_NULL_POINTER = 1,
  SPIFFY_STATUS_INVALID_ARGUMENT = 2,
  SPIFFY_STATUS_PARSE = 3,
  SPIFFY_STATUS_IO = 4,
  SPIFFY_STATUS_INVALID_GRAPH = 5,
  SPIFFY_STATUS_BUFFER_TOO_SMALL = 6,
  SPIFFY_STATUS_PANIC = 7,
} SpiffyStatus;

/**
 * Opaque draft graph.
 */
typedef struct SpiffyGraph SpiffyGraph;

/**
 * Opaque trained toy denoiser.
 */
typedef struct SpiffyModel SpiffyModel;

/**
 * Generation settings; see [`spiffy_config_default`].
 */
typedef struct SpiffyConfig {
  size_t gen_len;
  size_t block_len;
  /**
   * A [`SpiffyScheduleMode`] value.
   */
  uint32_t mode;
  /**
   * Tokens per step for `Fixed`.
   */
  size_t fixed_s;
  /**
   * Confidence threshold for `Threshold`.
   */
  double threshold_p;
  size_t top_k_vocab;
  uint32_t eot_token;
  uint64_t seed;
} SpiffyConfig;

/**
 * Accounting for one generation.
 */
typedef struct SpiffyStats {
  size_t total_nfe;
  size_t baseline_nfe;
  size_t acceptances;
  /**
   * First block containing the EOT token, or -1.
   */
  int64_t eot_block;
  double speedup_all;
  double speedup_to_eot;
} SpiffyStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *spiffy_last_error(void);

const char *spiffy_version(void);

struct SpiffyConfig spiffy_config_default(void);

/**
 * Trains a model on `n_seqs` sequences laid end to end in `tokens`, the
 * i-th having `lengths[i]` tokens.
 *
 * # Safety
 * `tokens` must point to the sum of `lengths` ids, `lengths` to `n_seqs`
 * entries, and `out` to writable storage for one pointer.
 */
enum SpiffyStatus spiffy_model_train(const uint32_t *tokens,
                                     const size_t *lengths,
                                     size_t n_seqs,
                                     size_t vocab,
                                     double alpha,
                                     double lambda_left,
                                     double lambda_right,
                                     double lambda_unigram,
                                     struct SpiffyModel **out);

/**
 * Trains a model on a corpus file (one sequence of ids per line) with the
 * default mixture; the vocabulary is the largest id seen.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum SpiffyStatus spiffy_model_from_corpus(const char *path,
                                           double alpha,
                                           struct SpiffyModel **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum SpiffyStatus spiffy_model_load(const char *path, struct SpiffyModel **out);

/**
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum SpiffyStatus spiffy_model_save(const struct SpiffyModel *model, const char *path);

/**
 * Vocabulary size, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t spiffy_model_vocab(const struct SpiffyModel *model);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void spiffy_model_free(struct SpiffyModel *model);

/**
 * Parses the graph text format.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` writable.
 */
enum SpiffyStatus spiffy_graph_parse(const char *text, struct SpiffyGraph **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum SpiffyStatus spiffy_graph_load(const char *path, struct SpiffyGraph **out);

/**
 * Node count, or 0 for a null handle.
 *
 * # Safety
 * `graph` must be null or a live handle.
 */
size_t spiffy_graph_len(const struct SpiffyGraph *graph);

/**
 * # Safety
 * `graph` must be null or a handle not yet freed.
 */
void spiffy_graph_free(struct SpiffyGraph *graph);

/**
 * Generates `config.gen_len` tokens after `prompt` into `out_tokens`.
 *
 * A null `graph` runs vanilla decoding. When `out_cap` is too small nothing
 * is written and `BufferTooSmall` is returned. `stats` may be null.
 *
 * # Safety
 * `model` must be live, `graph` null or live, `config` valid, `prompt` must
 * hold `prompt_len` ids and `out_tokens` `out_cap` slots.
 */
enum SpiffyStatus spiffy_generate(const struct SpiffyModel *model,
                                  const struct SpiffyGraph *graph,
                                  const struct SpiffyConfig *config,
                                  const uint32_t *prompt,
                                  size_t prompt_len,
                                  uint32_t *out_tokens,
                                  size_t out_cap,
                                  struct SpiffyStats *stats);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPIFFY_H */
