#ifndef METAEMBED_H
#define METAEMBED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MeStatus {
  ME_STATUS_OK = 0,
  ME_STATUS_NULL_ARGUMENT = 1,
  ME_STATUS_INVALID_UTF8 = 2,
  ME_STATUS_INVALID_ARGUMENT = 3,
  ME_STATUS_IO = 4,
  ME_STATUS_PARSE = 5,
  ME_STATUS_OUT_OF_VOCABULARY = 6,
  ME_STATUS_BUFFER_TOO_SMALL = 7,
  ME_STATUS_NUMERICAL = 8,
  ME_STATUS_PIPELINE = 9,
  ME_STATUS_PANIC = 10,
} MeStatus;

/**
 * Embedding file format selector.
 */
typedef enum MeFormat {
  /**
   * Detect from the file contents. Only valid when loading.
   */
  ME_FORMAT_AUTO = 0,
  ME_FORMAT_WORD2VEC_TEXT = 1,
  ME_FORMAT_GLOVE_TEXT = 2,
  ME_FORMAT_CACHE_BINARY = 3,
} MeFormat;

/**
 * Opaque handle to a loaded embedding set.
 */
typedef struct MeEmbedding MeEmbedding;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *me_version(void);

/**
 * Message of the last failed call on this thread, or null if the last
 * call succeeded. The pointer stays valid until the next call into the
 * library on this thread.
 */
const char *me_last_error_message(void);

/**
 * Loads an embedding file into a new handle.
 *
 * # Safety
 *
 * `path` must be a valid NUL-terminated string and `out` a valid pointer
 * to writable storage for one handle.
 */
enum MeStatus me_embedding_load(const char *path, enum MeFormat format, struct MeEmbedding **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 *
 * `emb` must be null or a handle returned by [`me_embedding_load`] that
 * has not been freed yet.
 */
void me_embedding_free(struct MeEmbedding *emb);

/**
 * Number of words in the embedding, or 0 for a null handle.
 *
 * # Safety
 *
 * `emb` must be null or a live handle.
 */
size_t me_embedding_len(const struct MeEmbedding *emb);

/**
 * Vector dimension, or 0 for a null handle.
 *
 * # Safety
 *
 * `emb` must be null or a live handle.
 */
size_t me_embedding_dim(const struct MeEmbedding *emb);

/**
 * Copies the vector of `word` into `buf`, which must hold at least
 * [`me_embedding_dim`] floats.
 *
 * # Safety
 *
 * `emb` must be a live handle, `word` a valid NUL-terminated string and
 * `buf` valid for `buf_len` writes.
 */
enum MeStatus me_embedding_vector(const struct MeEmbedding *emb,
                                  const char *word,
                                  float *buf,
                                  size_t buf_len);

/**
 * Cosine similarity of two words. A zero vector has similarity 0.
 *
 * # Safety
 *
 * `emb` must be a live handle, `a` and `b` valid NUL-terminated strings
 * and `out` a valid pointer to one double.
 */
enum MeStatus me_embedding_cosine(const struct MeEmbedding *emb,
                                  const char *a,
                                  const char *b,
                                  double *out);

/**
 * Writes the embedding to `path`. `ME_FORMAT_AUTO` is rejected.
 *
 * # Safety
 *
 * `emb` must be a live handle and `path` a valid NUL-terminated string.
 */
enum MeStatus me_embedding_save(const struct MeEmbedding *emb,
                                const char *path,
                                enum MeFormat format);

/**
 * Runs the pipeline described by a TOML config file and returns the
 * evaluation report as a JSON string in `out_json`. Release it with
 * [`me_string_free`].
 *
 * # Safety
 *
 * `config_path` must be a valid NUL-terminated string and `out_json` a
 * valid pointer to writable storage for one string pointer.
 */
enum MeStatus me_pipeline_run(const char *config_path, char **out_json);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 *
 * `s` must be null or a pointer returned by this library that has not
 * been freed yet.
 */
void me_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* METAEMBED_H */
