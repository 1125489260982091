// SPDX-License-Identifier: MIT OR Apache-2.0

//! Bitboard position, move generation and the flip rule.
//!
//! Tiles are numbered row-major: bit `i` is row `i / 8`, column `i % 8`,
//! so tile 0 is a1, tile 7 is h1 and tile 19 is d3.

use std::fmt;

use crate::error::{Error, Result};

const FILE_A: u64 = 0x0101_0101_0101_0101;
const FILE_H: u64 = 0x8080_8080_8080_8080;
const NOT_FILE_A: u64 = !FILE_A;
const NOT_FILE_H: u64 = !FILE_H;

/// The four corner tiles: 0, 7, 56, 63.
pub const CORNERS: u64 = (1 << 0) | (1 << 7) | (1 << 56) | (1 << 63);
/// Every tile on the outer ring, corners included.
pub const BORDER: u64 = 0xFF00_0000_0000_00FF | FILE_A | FILE_H;
/// The 36 tiles not on the outer ring.
pub const INTERIOR: u64 = !BORDER;
/// The four centre tiles occupied in the initial position.
pub const CENTER: u64 = (1 << 27) | (1 << 28) | (1 << 35) | (1 << 36);

/// One of the eight compass directions on the board.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    North,
    South,
    East,
    West,
    NorthEast,
    NorthWest,
    SouthEast,
    SouthWest,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::North,
        Direction::South,
        Direction::East,
        Direction::West,
        Direction::NorthEast,
        Direction::NorthWest,
        Direction::SouthEast,
        Direction::SouthWest,
    ];

    pub const ORTHOGONAL: [Direction; 4] = [
        Direction::North,
        Direction::South,
        Direction::East,
        Direction::West,
    ];

    /// Moves every bit of `bits` one step in this direction, dropping bits
    /// that would leave the board.
    #[inline]
    pub const fn shift(self, bits: u64) -> u64 {
        match self {
            // "North" is towards row 0.
            Direction::North => bits >> 8,
            Direction::South => bits << 8,
            Direction::East => (bits << 1) & NOT_FILE_A,
            Direction::West => (bits >> 1) & NOT_FILE_H,
            Direction::NorthEast => (bits >> 7) & NOT_FILE_A,
            Direction::NorthWest => (bits >> 9) & NOT_FILE_H,
            Direction::SouthEast => (bits << 9) & NOT_FILE_A,
            Direction::SouthWest => (bits << 7) & NOT_FILE_H,
        }
    }
}

/// Disc colour, also used for "player".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Player {
    Black,
    White,
}

impl Player {
    #[inline]
    pub const fn opponent(self) -> Player {
        match self {
            Player::Black => Player::White,
            Player::White => Player::Black,
        }
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Player::Black => f.write_str("black"),
            Player::White => f.write_str("white"),
        }
    }
}

/// A board location, 0..64 row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tile(u8);

impl Tile {
    pub fn new(index: usize) -> Result<Tile> {
        if index < 64 {
            Ok(Tile(index as u8))
        } else {
            Err(Error::TileOutOfRange(index))
        }
    }

    /// # Panics
    /// Panics if `row` or `col` is not below 8.
    pub fn at(row: usize, col: usize) -> Tile {
        assert!(row < 8 && col < 8, "tile ({row}, {col}) off the board");
        Tile((row * 8 + col) as u8)
    }

    #[inline]
    pub const fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub const fn row(self) -> usize {
        self.0 as usize / 8
    }

    #[inline]
    pub const fn col(self) -> usize {
        self.0 as usize % 8
    }

    #[inline]
    pub const fn bit(self) -> u64 {
        1u64 << self.0
    }

    /// Iterates the tiles whose bits are set in `mask`, in ascending order.
    pub fn iter_mask(mask: u64) -> impl Iterator<Item = Tile> {
        let mut rest = mask;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let t = rest.trailing_zeros() as u8;
                rest &= rest - 1;
                Some(Tile(t))
            }
        })
    }
}

impl fmt::Display for Tile {
    /// Algebraic name: column letter then 1-based row, e.g. tile 19 is `d3`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let col = (b'a' + self.col() as u8) as char;
        write!(f, "{}{}", col, self.row() + 1)
    }
}

/// An Othello position: one occupancy mask per colour plus the side to move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Board {
    black: u64,
    white: u64,
    to_move: Player,
}

impl Board {
    /// Standard start: white on d4/e5 (27, 36), black on e4/d5 (28, 35), black to move.
    pub const fn initial() -> Board {
        Board {
            black: (1 << 28) | (1 << 35),
            white: (1 << 27) | (1 << 36),
            to_move: Player::Black,
        }
    }

    pub const fn empty(to_move: Player) -> Board {
        Board {
            black: 0,
            white: 0,
            to_move,
        }
    }

    pub fn from_masks(black: u64, white: u64, to_move: Player) -> Result<Board> {
        if black & white != 0 {
            return Err(Error::InvalidBoard(format!(
                "black and white overlap on {:#018x}",
                black & white
            )));
        }
        Ok(Board {
            black,
            white,
            to_move,
        })
    }

    #[inline]
    pub const fn black(&self) -> u64 {
        self.black
    }

    #[inline]
    pub const fn white(&self) -> u64 {
        self.white
    }

    #[inline]
    pub const fn to_move(&self) -> Player {
        self.to_move
    }

    #[inline]
    pub const fn occupied(&self) -> u64 {
        self.black | self.white
    }

    #[inline]
    pub const fn empty_tiles(&self) -> u64 {
        !(self.black | self.white)
    }

    #[inline]
    pub const fn discs(&self, player: Player) -> u64 {
        match player {
            Player::Black => self.black,
            Player::White => self.white,
        }
    }

    /// Colour of the disc on `tile`, if any.
    pub fn color_at(&self, tile: Tile) -> Option<Player> {
        if self.black & tile.bit() != 0 {
            Some(Player::Black)
        } else if self.white & tile.bit() != 0 {
            Some(Player::White)
        } else {
            None
        }
    }

    /// Bitmask of legal moves for the side to move.
    pub fn legal_moves(&self) -> u64 {
        let own = self.discs(self.to_move);
        let opp = self.discs(self.to_move.opponent());
        let empty = self.empty_tiles();
        let mut moves = 0u64;
        for dir in Direction::ALL {
            let mut run = dir.shift(own) & opp;
            // A bracketed run is at most six discs long.
            for _ in 0..5 {
                run |= dir.shift(run) & opp;
            }
            moves |= dir.shift(run) & empty;
        }
        moves
    }

    pub fn is_legal(&self, tile: Tile) -> bool {
        self.legal_moves() & tile.bit() != 0
    }

    pub fn has_legal_move(&self) -> bool {
        self.legal_moves() != 0
    }

    /// Discs that placing at `tile` would flip; empty if the move brackets nothing.
    pub fn flips(&self, tile: Tile) -> u64 {
        if self.occupied() & tile.bit() != 0 {
            return 0;
        }
        let own = self.discs(self.to_move);
        let opp = self.discs(self.to_move.opponent());
        let mut flipped = 0u64;
        for dir in Direction::ALL {
            let mut line = 0u64;
            let mut cursor = dir.shift(tile.bit());
            while cursor & opp != 0 {
                line |= cursor;
                cursor = dir.shift(cursor);
            }
            if cursor & own != 0 {
                flipped |= line;
            }
        }
        flipped
    }

    /// Places a disc for the side to move, flips every bracketed line and
    /// hands the turn to the opponent. Passes are the caller's business.
    pub fn apply_move(&self, tile: Tile) -> Result<Board> {
        let flipped = self.flips(tile);
        if flipped == 0 {
            return Err(Error::IllegalMove {
                tile: tile.index() as u8,
            });
        }
        let placed = flipped | tile.bit();
        let (black, white) = match self.to_move {
            Player::Black => (self.black | placed, self.white & !flipped),
            Player::White => (self.black & !flipped, self.white | placed),
        };
        Ok(Board {
            black,
            white,
            to_move: self.to_move.opponent(),
        })
    }

    /// The same position with the other side to move.
    pub fn pass(&self) -> Board {
        Board {
            to_move: self.to_move.opponent(),
            ..*self
        }
    }

    /// Hands the turn over if the side to move is stuck but the opponent is not.
    pub fn resolve_pass(&self) -> Board {
        if !self.has_legal_move() {
            let passed = self.pass();
            if passed.has_legal_move() {
                return passed;
            }
        }
        *self
    }

    /// Neither side can move.
    pub fn is_terminal(&self) -> bool {
        !self.has_legal_move() && !self.pass().has_legal_move()
    }
}

impl Default for Board {
    fn default() -> Self {
        Board::initial()
    }
}

impl fmt::Display for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "  a b c d e f g h")?;
        for row in 0..8 {
            write!(f, "{}", row + 1)?;
            for col in 0..8 {
                let c = match self.color_at(Tile::at(row, col)) {
                    Some(Player::Black) => 'X',
                    Some(Player::White) => 'O',
                    None => '.',
                };
                write!(f, " {c}")?;
            }
            writeln!(f)?;
        }
        write!(f, "{} to move", self.to_move)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(tiles: &[usize]) -> u64 {
        tiles.iter().fold(0, |m, &t| m | (1u64 << t))
    }

    #[test]
    fn initial_setup() {
        let b = Board::initial();
        assert_eq!(b.black().count_ones(), 2);
        assert_eq!(b.white().count_ones(), 2);
        assert_eq!(b.black() & b.white(), 0);
        assert_eq!(b.black(), mask(&[28, 35]));
        assert_eq!(b.white(), mask(&[27, 36]));
        assert_eq!(b.to_move(), Player::Black);
    }

    #[test]
    fn opening_moves() {
        assert_eq!(Board::initial().legal_moves(), mask(&[19, 26, 37, 44]));
    }

    #[test]
    fn d3_flips_d4() {
        let b = Board::initial().apply_move(Tile::new(19).unwrap()).unwrap();
        assert_eq!(b.black(), mask(&[19, 27, 28, 35]));
        assert_eq!(b.white(), mask(&[36]));
        assert_eq!(b.to_move(), Player::White);
        assert_eq!(Tile::new(19).unwrap().to_string(), "d3");
    }

    #[test]
    fn full_board_rejects_moves() {
        let b = Board::from_masks(u64::MAX, 0, Player::White).unwrap();
        for t in 0..64 {
            assert!(matches!(
                b.apply_move(Tile::new(t).unwrap()),
                Err(Error::IllegalMove { .. })
            ));
        }
        assert_eq!(b.legal_moves(), 0);
    }

    #[test]
    fn no_bracketing_line_means_no_moves() {
        // Black alone on the board cannot bracket anything.
        let b = Board::from_masks(mask(&[27, 28]), 0, Player::Black).unwrap();
        assert_eq!(b.legal_moves(), 0);
        assert!(b.is_terminal());
    }

    #[test]
    fn overlapping_masks_rejected() {
        assert!(Board::from_masks(1, 1, Player::Black).is_err());
        assert!(Tile::new(64).is_err());
    }

    #[test]
    fn shifts_do_not_wrap() {
        assert_eq!(Direction::East.shift(1 << 7), 0);
        assert_eq!(Direction::West.shift(1 << 8), 0);
        assert_eq!(Direction::SouthEast.shift(1 << 15), 0);
        assert_eq!(Direction::NorthWest.shift(1 << 8), 0);
        assert_eq!(Direction::North.shift(1 << 3), 0);
    }

    #[test]
    fn mover_gains_at_least_two() {
        let b = Board::initial();
        for t in Tile::iter_mask(b.legal_moves()) {
            let after = b.apply_move(t).unwrap();
            assert!(after.black().count_ones() >= b.black().count_ones() + 2);
        }
    }
}
