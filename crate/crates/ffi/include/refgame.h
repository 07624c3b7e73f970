#ifndef REFGAME_H
#define REFGAME_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RgStatus {
  RG_STATUS_OK = 0,
  RG_STATUS_NULL_POINTER = 1,
  RG_STATUS_INVALID_UTF8 = 2,
  RG_STATUS_INVALID_ARGUMENT = 3,
  RG_STATUS_IO = 4,
  RG_STATUS_CORPUS = 5,
  RG_STATUS_WORLD = 6,
  RG_STATUS_SPEAKER = 7,
  RG_STATUS_PRAGMATICS = 8,
  RG_STATUS_EVAL = 9,
  RG_STATUS_EXPERIMENT = 10,
  RG_STATUS_PANIC = 99,
} RgStatus;

/**
 * A loaded or generated corpus.
 */
typedef struct RgCorpus RgCorpus;

/**
 * A literal speaker with its word/category table.
 */
typedef struct RgModel RgModel;

typedef struct RgDecodeParams {
  double alpha;
  double beta_repeat;
  size_t max_len;
  double listener_floor;
} RgDecodeParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *rg_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into the library on the same thread.
 */
const char *rg_last_error_message(void);

/**
 * # Safety
 * `s` must come from this library or be NULL.
 */
void rg_string_free(char *s);

/**
 * Loads a JSONL corpus file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum RgStatus rg_corpus_load(const char *path, struct RgCorpus **out);

/**
 * Parses a corpus from JSONL text.
 *
 * # Safety
 * `jsonl` must be a NUL-terminated string; `out` a valid pointer.
 */
enum RgStatus rg_corpus_from_jsonl(const char *jsonl, struct RgCorpus **out);

/**
 * Generates the synthetic world of an experiment config (TOML text, or NULL
 * for the bundled demo).
 *
 * # Safety
 * `config_toml` must be NULL or a NUL-terminated string; `out` a valid pointer.
 */
enum RgStatus rg_world_generate(const char *config_toml, struct RgCorpus **out);

/**
 * # Safety
 * `corpus` must come from this library or be NULL.
 */
void rg_corpus_free(struct RgCorpus *corpus);

/**
 * Number of records, 0 for NULL.
 *
 * # Safety
 * `corpus` must come from this library or be NULL.
 */
size_t rg_corpus_len(const struct RgCorpus *corpus);

/**
 * Serializes the corpus as JSONL.
 *
 * # Safety
 * `corpus` must be a live handle; `out` a valid pointer.
 */
enum RgStatus rg_corpus_to_jsonl(const struct RgCorpus *corpus, char **out);

/**
 * Zero-shot split: every scene containing `category` goes to the test half.
 *
 * # Safety
 * `corpus` must be a live handle, `category` a NUL-terminated string and
 * both outputs valid pointers.
 */
enum RgStatus rg_corpus_split(const struct RgCorpus *corpus,
                              const char *category,
                              struct RgCorpus **out_train,
                              struct RgCorpus **out_test);

/**
 * Default decoding parameters.
 */
struct RgDecodeParams rg_decode_params_default(void);

/**
 * Trains a literal speaker and word/category table on `train` with the
 * smoothing constants and feature rule of an experiment config (NULL for the
 * bundled demo).
 *
 * # Safety
 * `train` must be a live handle, `config_toml` NULL or a NUL-terminated
 * string, `out` a valid pointer.
 */
enum RgStatus rg_model_train(const struct RgCorpus *train,
                             const char *config_toml,
                             struct RgModel **out);

/**
 * # Safety
 * `model` must come from this library or be NULL.
 */
void rg_model_free(struct RgModel *model);

/**
 * Literal (S0) greedy expression for the target of record `record`.
 *
 * # Safety
 * Handles must be live and `out` a valid pointer.
 */
enum RgStatus rg_model_decode_literal(const struct RgModel *model,
                                      const struct RgCorpus *corpus,
                                      size_t record,
                                      char **out);

/**
 * Pragmatic (S1) expression under a uniform category belief.
 *
 * # Safety
 * Handles must be live and `out` a valid pointer.
 */
enum RgStatus rg_model_decode_pragmatic(const struct RgModel *model,
                                        const struct RgCorpus *corpus,
                                        size_t record,
                                        struct RgDecodeParams params,
                                        char **out);

/**
 * Category-marginal listener score of `word` under unnormalized category
 * weights (`n_weights` must equal the model's category count).
 *
 * # Safety
 * `model` must be live, `word` NUL-terminated, `weights` point to
 * `n_weights` doubles and `out` be valid.
 */
enum RgStatus rg_listener_score_raw(const struct RgModel *model,
                                    const char *word,
                                    const double *weights,
                                    size_t n_weights,
                                    double *out);

/**
 * Runs the full experiment and returns the report as JSON (`format` 0),
 * CSV (1) or a markdown table (2).
 *
 * # Safety
 * `config_toml` must be NULL or NUL-terminated; `out` a valid pointer.
 */
enum RgStatus rg_run_experiment(const char *config_toml, int format, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REFGAME_H */
