// SPDX-License-Identifier: MIT OR Apache-2.0

//! Colour-blind tile stability.
//!
//! An occupied tile is stable when it is a corner, an edge tile next to a
//! stable tile, or an interior tile whose eight neighbours are all stable.
//! The rules are applied repeatedly until nothing changes.

use super::board::{Board, Direction, BORDER, CORNERS, INTERIOR};

/// Neighbourhood used by the edge rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeAdjacency {
    /// Up, down, left, right.
    #[default]
    Four,
    /// All eight surrounding tiles.
    Eight,
}

/// Bit `i` set iff tile `i` is stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct StabilityMap {
    pub stable_mask: u64,
}

impl StabilityMap {
    pub fn is_stable(&self, tile: usize) -> bool {
        self.stable_mask >> tile & 1 == 1
    }

    pub fn count(&self) -> u32 {
        self.stable_mask.count_ones()
    }
}

const EDGES: u64 = BORDER & !CORNERS;

fn touching(stable: u64, dirs: &[Direction]) -> u64 {
    dirs.iter().fold(0, |acc, d| acc | d.shift(stable))
}

fn surrounded(stable: u64) -> u64 {
    Direction::ALL
        .iter()
        .fold(u64::MAX, |acc, d| acc & d.shift(stable))
}

pub fn stability_map(board: &Board) -> StabilityMap {
    stability_map_with(board, EdgeAdjacency::Four)
}

pub fn stability_map_with(board: &Board, adjacency: EdgeAdjacency) -> StabilityMap {
    let occupied = board.occupied();
    let edge_dirs: &[Direction] = match adjacency {
        EdgeAdjacency::Four => &Direction::ORTHOGONAL,
        EdgeAdjacency::Eight => &Direction::ALL,
    };
    let mut stable = occupied & CORNERS;
    loop {
        let next = stable
            | (occupied & EDGES & touching(stable, edge_dirs))
            | (occupied & INTERIOR & surrounded(stable));
        if next == stable {
            return StabilityMap { stable_mask: stable };
        }
        stable = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::othello::Player;

    #[test]
    fn empty_and_initial_boards_have_nothing_stable() {
        assert_eq!(stability_map(&Board::empty(Player::Black)).count(), 0);
        assert_eq!(stability_map(&Board::initial()).count(), 0);
    }

    #[test]
    fn lone_corner() {
        let b = Board::from_masks(1, 0, Player::Black).unwrap();
        assert_eq!(stability_map(&b).stable_mask, 1);
    }

    #[test]
    fn full_board_is_edge_ring() {
        let b = Board::from_masks(0xAAAA_5555_AAAA_5555, 0x5555_AAAA_5555_AAAA, Player::Black).unwrap();
        let s = stability_map(&b);
        assert_eq!(s.count(), 28);
        assert_eq!(s.stable_mask, BORDER);
    }

    #[test]
    fn eight_adjacency_reaches_diagonal_edge_neighbours() {
        // Column a from a2 down to the a8 corner, plus b1; a1 stays empty.
        let column: u64 = (1..8).fold(0, |m, r| m | 1u64 << (r * 8));
        let b = Board::from_masks(column | 1 << 1, 0, Player::Black).unwrap();
        assert_eq!(stability_map(&b).stable_mask, column);
        assert_eq!(
            stability_map_with(&b, EdgeAdjacency::Eight).stable_mask,
            column | 1 << 1
        );
    }

    #[test]
    fn stable_only_when_occupied() {
        let b = Board::from_masks(0x00FF_0000_0000_0081, 0x0000_0000_00FF_0000, Player::White).unwrap();
        let s = stability_map(&b);
        assert_eq!(s.stable_mask & !b.occupied(), 0);
    }
}
