/* SPDX-License-Identifier: MIT OR Apache-2.0 */
/* Exercises the C header end to end: board, metrics and error paths. */

#include <stdio.h>
#include <string.h>

#include "owml.h"

#define CHECK(cond)                                              \
    do {                                                         \
        if (!(cond)) {                                           \
            fprintf(stderr, "failed: %s (line %d)\n", #cond, __LINE__); \
            return 1;                                            \
        }                                                        \
    } while (0)

int main(void) {
    OwmlBoard *b = NULL;
    uint64_t legal = 0;
    CHECK(owml_board_new(&b) == OWML_STATUS_OK);
    CHECK(owml_board_legal_moves(b, &legal) == OWML_STATUS_OK);
    CHECK(__builtin_popcountll(legal) == 4);
    CHECK(owml_board_play(b, 0) == OWML_STATUS_ILLEGAL_MOVE);

    char msg[256];
    CHECK(owml_last_error_message(msg, sizeof msg) > 0);
    CHECK(strstr(msg, "illegal") != NULL);

    /* d3 is tile 19. */
    CHECK(owml_board_play(b, 19) == OWML_STATUS_OK);
    uint64_t black = 0, white = 0;
    uint8_t to_move = 9;
    CHECK(owml_board_state(b, &black, &white, &to_move) == OWML_STATUS_OK);
    CHECK(__builtin_popcountll(black) == 4 && __builtin_popcountll(white) == 1 && to_move == 1);
    owml_board_free(b);

    float values[4] = {0.9f, 0.8f, 0.3f, 0.1f};
    uint8_t labels[4] = {1, 0, 1, 0};
    double a = 0.0;
    CHECK(owml_auroc(values, labels, 4, OWML_AUROC_METHOD_RANK, &a) == OWML_STATUS_OK);
    CHECK(a == 0.75);
    uint8_t same[4] = {1, 1, 1, 1};
    CHECK(owml_auroc(values, same, 4, OWML_AUROC_METHOD_RANK, &a) == OWML_STATUS_SINGLE_CLASS);
    CHECK(owml_auroc(NULL, labels, 4, OWML_AUROC_METHOD_RANK, &a) == OWML_STATUS_NULL_POINTER);
    CHECK(owml_f1(1, 1, 1) == 0.5);

    uint8_t moves[2] = {19, 18};
    uint8_t tokens[5];
    CHECK(owml_tokenize(moves, 2, 5, tokens) == OWML_STATUS_OK);
    CHECK(tokens[0] == 19 && tokens[2] == 65 && tokens[4] == 64);

    OwmlGpt *g = NULL;
    CHECK(owml_gpt_load("/nonexistent/model.ockp", &g) == OWML_STATUS_MISSING_INPUT);
    CHECK(g == NULL);
    printf("ok %s\n", owml_version());
    return 0;
}
