// SPDX-License-Identifier: MIT OR Apache-2.0

//! Random legal games and their board trajectories.

use rand::RngExt;

use super::board::{Board, Player, Tile, CENTER};
use crate::error::{Error, Result};
use crate::rng;

/// One complete game: the moves played and the position they lead to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameRecord {
    moves: Vec<Tile>,
    final_board: Board,
}

impl GameRecord {
    /// Replays `moves` from the initial position, inserting passes where the
    /// side to move has no legal move.
    pub fn replay(moves: &[Tile]) -> Result<GameRecord> {
        let mut board = Board::initial();
        for &tile in moves {
            if tile.bit() & CENTER != 0 {
                return Err(Error::IllegalMove {
                    tile: tile.index() as u8,
                });
            }
            board = board.resolve_pass().apply_move(tile)?;
        }
        Ok(GameRecord {
            moves: moves.to_vec(),
            final_board: board.resolve_pass(),
        })
    }

    pub fn moves(&self) -> &[Tile] {
        &self.moves
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn final_board(&self) -> &Board {
        &self.final_board
    }
}

/// Plays uniformly random legal moves until neither side can move.
/// A side without a move passes silently; the pass leaves no trace in `moves`.
pub fn random_game(seed: u64) -> GameRecord {
    let mut rng = rng::seeded(seed);
    let mut board = Board::initial();
    let mut moves = Vec::with_capacity(60);
    loop {
        board = board.resolve_pass();
        let legal = board.legal_moves();
        if legal == 0 {
            break;
        }
        let pick = rng.random_range(0..legal.count_ones() as usize);
        let tile = Tile::iter_mask(legal)
            .nth(pick)
            .expect("pick is below the move count");
        board = board.apply_move(tile).expect("generated moves are legal");
        moves.push(tile);
    }
    GameRecord {
        moves,
        final_board: board,
    }
}

/// One step of a trajectory: the position right after a move, with the side
/// to move already adjusted for a pass, and the player who made the move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrajectoryStep {
    pub board: Board,
    pub mover: Player,
}

pub fn board_trajectory(game: &GameRecord) -> Vec<TrajectoryStep> {
    let mut board = Board::initial();
    game.moves
        .iter()
        .map(|&tile| {
            let mover = board.to_move();
            board = board
                .apply_move(tile)
                .expect("GameRecord moves replay legally")
                .resolve_pass();
            TrajectoryStep { board, mover }
        })
        .collect()
}

/// Per-tile state relative to a perspective player.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TileMode {
    Empty,
    Own,
    Enemy,
}

impl TileMode {
    pub const ALL: [TileMode; 3] = [TileMode::Empty, TileMode::Own, TileMode::Enemy];

    pub fn name(self) -> &'static str {
        match self {
            TileMode::Empty => "empty",
            TileMode::Own => "own",
            TileMode::Enemy => "enemy",
        }
    }

    pub fn parse(s: &str) -> Option<TileMode> {
        TileMode::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Bitmask of tiles whose state relative to `perspective` is `mode`.
pub fn tile_labels(board: &Board, perspective: Player, mode: TileMode) -> u64 {
    match mode {
        TileMode::Empty => board.empty_tiles(),
        TileMode::Own => board.discs(perspective),
        TileMode::Enemy => board.discs(perspective.opponent()),
    }
}

/// 64 tile states relative to a player.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileStateVector {
    pub states: [TileMode; 64],
}

impl TileStateVector {
    pub fn relative(board: &Board, perspective: Player) -> TileStateVector {
        let own = board.discs(perspective);
        let enemy = board.discs(perspective.opponent());
        let mut states = [TileMode::Empty; 64];
        for (i, s) in states.iter_mut().enumerate() {
            if own >> i & 1 == 1 {
                *s = TileMode::Own;
            } else if enemy >> i & 1 == 1 {
                *s = TileMode::Enemy;
            }
        }
        TileStateVector { states }
    }

    /// Absolute colour codes: 0 empty, 1 black, 2 white.
    pub fn absolute(&self, perspective: Player) -> [u8; 64] {
        let (own, enemy) = match perspective {
            Player::Black => (1, 2),
            Player::White => (2, 1),
        };
        self.states.map(|s| match s {
            TileMode::Empty => 0,
            TileMode::Own => own,
            TileMode::Enemy => enemy,
        })
    }

    pub fn from_absolute(codes: &[u8; 64], perspective: Player) -> Result<TileStateVector> {
        let mut states = [TileMode::Empty; 64];
        for (s, &c) in states.iter_mut().zip(codes) {
            let colour = match c {
                0 => None,
                1 => Some(Player::Black),
                2 => Some(Player::White),
                other => {
                    return Err(Error::InvalidBoard(format!("colour code {other}")));
                }
            };
            *s = match colour {
                None => TileMode::Empty,
                Some(p) if p == perspective => TileMode::Own,
                Some(_) => TileMode::Enemy,
            };
        }
        Ok(TileStateVector { states })
    }
}

/// Absolute colour codes straight from a board.
pub fn absolute_encoding(board: &Board) -> [u8; 64] {
    TileStateVector::relative(board, Player::Black).absolute(Player::Black)
}
