/* SPDX-License-Identifier: MIT OR Apache-2.0 */

#ifndef OWML_H
#define OWML_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum OwmlStatus {
  OWML_STATUS_OK = 0,
  OWML_STATUS_NULL_POINTER = 1,
  OWML_STATUS_INVALID_ARGUMENT = 2,
  OWML_STATUS_ILLEGAL_MOVE = 3,
  OWML_STATUS_SHAPE_MISMATCH = 4,
  OWML_STATUS_FORMAT_ERROR = 5,
  OWML_STATUS_IO_ERROR = 6,
  OWML_STATUS_MISSING_INPUT = 7,
  OWML_STATUS_CONFIG_ERROR = 8,
  OWML_STATUS_NON_FINITE = 9,
  OWML_STATUS_SINGLE_CLASS = 10,
  OWML_STATUS_BUFFER_TOO_SMALL = 11,
  OWML_STATUS_PANIC = 12,
  OWML_STATUS_INTERNAL = 13,
} OwmlStatus;

// AUROC flavour for [`owml_auroc`].
typedef enum OwmlAurocMethod {
  OWML_AUROC_METHOD_RANK = 0,
  OWML_AUROC_METHOD_BINARY_TRAPEZOID = 1,
} OwmlAurocMethod;

// Opaque Othello position.
typedef struct OwmlBoard OwmlBoard;

// Opaque trained transformer.
typedef struct OwmlGpt OwmlGpt;

// Opaque sparse autoencoder.
typedef struct OwmlSae OwmlSae;

// Confusion counts of a `> 0` binarised feature against labels.
typedef struct OwmlConfusion {
  uint32_t tp;
  uint32_t fp;
  uint32_t tn;
  uint32_t fn_;
} OwmlConfusion;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *owml_version(void);

// Copies the calling thread's last error message into `buf` (always
// NUL-terminated when `len > 0`) and returns the full message length
// in bytes, excluding the terminator. Returns 0 when there is none.
size_t owml_last_error_message(char *buf, size_t len);

// New board in the standard opening position.
enum OwmlStatus owml_board_new(struct OwmlBoard **board);

// Board from disc masks; `to_move` is 0 for black, 1 for white.
enum OwmlStatus owml_board_from_masks(uint64_t black,
                                      uint64_t white,
                                      uint8_t to_move,
                                      struct OwmlBoard **board);

void owml_board_free(struct OwmlBoard *board);

// Disc masks and side to move (0 black, 1 white).
enum OwmlStatus owml_board_state(const struct OwmlBoard *board,
                                 uint64_t *black,
                                 uint64_t *white,
                                 uint8_t *to_move);

// Legal moves of the side to move as a tile bitmask.
enum OwmlStatus owml_board_legal_moves(const struct OwmlBoard *board, uint64_t *mask);

// Plays `tile` (0..64, row-major from a1) in place. When the opponent
// then has no move but the mover does, the turn passes back.
enum OwmlStatus owml_board_play(struct OwmlBoard *board, uint8_t tile);

// Stable-tile bitmask of the position.
enum OwmlStatus owml_board_stable_tiles(const struct OwmlBoard *board, uint64_t *mask);

// Tokenises a move list (tile indices) into `tokens[0..max_len]`,
// EOS-terminated and PAD-filled. `tokens` must hold `max_len` bytes.
enum OwmlStatus owml_tokenize(const uint8_t *moves,
                              size_t n_moves,
                              size_t max_len,
                              uint8_t *tokens);

// Confusion counts with `values[i] > 0` as the prediction. `labels`
// holds one byte per sample; non-zero is positive.
enum OwmlStatus owml_binary_confusion(const float *values,
                                      const uint8_t *labels,
                                      size_t n,
                                      struct OwmlConfusion *result);

// `2tp / (2tp + fp + fn)`, 0 when the denominator is 0.
double owml_f1(uint32_t tp, uint32_t fp, uint32_t fn_);

// Area under the ROC curve of `values` against `labels`.
enum OwmlStatus owml_auroc(const float *values,
                           const uint8_t *labels,
                           size_t n,
                           enum OwmlAurocMethod method,
                           double *result);

// Loads a transformer checkpoint.
enum OwmlStatus owml_gpt_load(const char *file, struct OwmlGpt **model);

void owml_gpt_free(struct OwmlGpt *model);

// Vocabulary size, i.e. the length of a logits row.
size_t owml_vocab_size(void);

// Next-token logits after `tokens[0..n]`, written to `logits[0..66]`.
enum OwmlStatus owml_gpt_next_logits(const struct OwmlGpt *model,
                                     const uint8_t *tokens,
                                     size_t n,
                                     float *logits,
                                     size_t logits_len);

// Loads a sparse autoencoder checkpoint.
enum OwmlStatus owml_sae_load(const char *file, struct OwmlSae **sae);

void owml_sae_free(struct OwmlSae *sae);

// Input and latent widths.
enum OwmlStatus owml_sae_dims(const struct OwmlSae *sae, size_t *d_in, size_t *d_latent);

// Encodes one raw activation vector into its sparse code.
enum OwmlStatus owml_sae_encode(const struct OwmlSae *sae,
                                const float *x,
                                size_t d_in,
                                float *code,
                                size_t d_latent);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OWML_H */
