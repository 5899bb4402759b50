#ifndef CFGZIP_H
#define CFGZIP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum CfgzStatus {
  CFGZ_STATUS_OK = 0,
  CFGZ_STATUS_NULL_ARGUMENT = 1,
  CFGZ_STATUS_INVALID_UTF8 = 2,
  CFGZ_STATUS_IO = 3,
  CFGZ_STATUS_GRAMMAR = 4,
  CFGZ_STATUS_VOCABULARY = 5,
  /*
   Corrupt, stale or unreadable cache.
   */
  CFGZ_STATUS_CACHE = 6,
  CFGZ_STATUS_TOKEN_OUT_OF_RANGE = 7,
  CFGZ_STATUS_LENGTH_MISMATCH = 8,
  /*
   The token is blocked in the current state.
   */
  CFGZ_STATUS_MASKED_TOKEN = 9,
  CFGZ_STATUS_INTERNAL = 10,
} CfgzStatus;

/*
 Compressed decoding stream: the engine follows class representatives.
 */
typedef struct CfgzDecoder CfgzDecoder;

/*
 Loaded class table.
 */
typedef struct CfgzTable CfgzTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. Valid until the
 next call on this thread.
 */
const char *cfgz_last_error(void);

/*
 Builds the class table for a grammar file and a vocabulary file and
 writes it to `cache_path`. `threads` of 0 means 1.

 # Safety
 Path arguments must be null or NUL-terminated strings.
 */
enum CfgzStatus cfgz_compile(const char *grammar_path,
                             const char *vocab_path,
                             const char *cache_path,
                             size_t threads);

/*
 Reads a cache file, checking its checksum and structure only.

 # Safety
 `cache_path` must be null or a NUL-terminated string; `out` must be null
 or writable.
 */
enum CfgzStatus cfgz_table_load(const char *cache_path, struct CfgzTable **out);

/*
 # Safety
 `table` must be null or a handle from [`cfgz_table_load`] not yet freed.
 */
void cfgz_table_free(struct CfgzTable *table);

/*
 Number of tokens, or 0 for a null handle.

 # Safety
 `table` must be null or a live handle.
 */
size_t cfgz_table_token_count(const struct CfgzTable *table);

/*
 Number of classes, or 0 for a null handle.

 # Safety
 `table` must be null or a live handle.
 */
size_t cfgz_table_class_count(const struct CfgzTable *table);

/*
 Class id and representative token of `token`.

 # Safety
 `table` must be null or a live handle; each output must be null or
 writable. Null outputs are skipped.
 */
enum CfgzStatus cfgz_table_lookup(const struct CfgzTable *table,
                                  uint32_t token,
                                  uint32_t *out_class,
                                  uint32_t *out_representative);

/*
 Sets `logits[i]` to negative infinity for every token whose class is
 blocked in `class_mask`.

 # Safety
 `logits` must hold `n_tokens` floats and `class_mask` `n_classes` bytes.
 */
enum CfgzStatus cfgz_table_apply_mask(const struct CfgzTable *table,
                                      float *logits,
                                      size_t n_tokens,
                                      const uint8_t *class_mask,
                                      size_t n_classes);

/*
 Opens a decoding stream. The cache must match both inputs.

 # Safety
 Path arguments must be null or NUL-terminated strings; `out` must be null
 or writable.
 */
enum CfgzStatus cfgz_decoder_new(const char *grammar_path,
                                 const char *vocab_path,
                                 const char *cache_path,
                                 struct CfgzDecoder **out);

/*
 # Safety
 `decoder` must be null or a handle from [`cfgz_decoder_new`] not yet freed.
 */
void cfgz_decoder_free(struct CfgzDecoder *decoder);

/*
 Number of tokens in the decoder's vocabulary, or 0 for a null handle.

 # Safety
 `decoder` must be null or a live handle.
 */
size_t cfgz_decoder_token_count(const struct CfgzDecoder *decoder);

/*
 Number of classes in the decoder's table, or 0 for a null handle.

 # Safety
 `decoder` must be null or a live handle.
 */
size_t cfgz_decoder_class_count(const struct CfgzDecoder *decoder);

/*
 Writes the class mask for the current state into `out[0..n_classes]`.

 # Safety
 `decoder` must be a live handle and `out` must hold `n_classes` bytes.
 */
enum CfgzStatus cfgz_decoder_class_mask(const struct CfgzDecoder *decoder,
                                        uint8_t *out,
                                        size_t n_classes);

/*
 Writes the full-vocabulary mask for the current state into
 `out[0..n_tokens]`.

 # Safety
 `decoder` must be a live handle and `out` must hold `n_tokens` bytes.
 */
enum CfgzStatus cfgz_decoder_token_mask(const struct CfgzDecoder *decoder,
                                        uint8_t *out,
                                        size_t n_tokens);

/*
 Advances by the representative of `token`'s class. The state is left
 unchanged on failure.

 # Safety
 `decoder` must be null or a live handle.
 */
enum CfgzStatus cfgz_decoder_commit(struct CfgzDecoder *decoder, uint32_t token);

/*
 Whether the committed text is a complete sentence. False for null.

 # Safety
 `decoder` must be null or a live handle.
 */
bool cfgz_decoder_is_complete(const struct CfgzDecoder *decoder);

/*
 Returns to the empty prefix.

 # Safety
 `decoder` must be null or a live handle.
 */
enum CfgzStatus cfgz_decoder_reset(struct CfgzDecoder *decoder);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CFGZIP_H */
