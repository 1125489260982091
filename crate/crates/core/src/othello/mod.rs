// SPDX-License-Identifier: MIT OR Apache-2.0

//! Othello rules engine on 64-bit bitboards.

mod board;
mod game;
mod stability;

pub use board::{Board, Direction, Player, Tile, BORDER, CENTER, CORNERS, INTERIOR};
pub use game::{
    absolute_encoding, board_trajectory, random_game, tile_labels, GameRecord, TileMode, TileStateVector,
    TrajectoryStep,
};
pub use stability::{stability_map, stability_map_with, EdgeAdjacency, StabilityMap};

/// Counts leaf nodes of the move tree `depth` plies deep. A forced pass
/// counts as a ply; a finished game is a leaf.
pub fn perft(board: &Board, depth: u32) -> u64 {
    if depth == 0 {
        return 1;
    }
    let moves = board.legal_moves();
    if moves == 0 {
        let passed = board.pass();
        if passed.has_legal_move() {
            return perft(&passed, depth - 1);
        }
        return 1;
    }
    Tile::iter_mask(moves)
        .map(|t| perft(&board.apply_move(t).expect("legal"), depth - 1))
        .sum()
}
