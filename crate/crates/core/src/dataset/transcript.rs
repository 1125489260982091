// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic game datasets and the `OTHL` transcript file.
//!
//! Layout (little-endian): magic `OTHL`, version `u32 = 1`, game count
//! `u32`, then per game a `u8` move count followed by that many `u8` tile
//! indices.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::activations::RowRef;
use super::tokens::MAX_MOVES;
use crate::binio::{read_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::othello::{board_trajectory, random_game, Board, GameRecord, Tile, TrajectoryStep};

const MAGIC: &[u8; 4] = b"OTHL";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub n_games: u32,
    pub seed: u64,
    pub max_seq_len: usize,
    pub states_per_game: usize,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.n_games == 0 {
            return Err(Error::Config("n_games must be at least 1".into()));
        }
        if self.states_per_game == 0 || self.states_per_game > MAX_MOVES {
            return Err(Error::Config(format!(
                "states_per_game {} outside 1..={MAX_MOVES}",
                self.states_per_game
            )));
        }
        if self.max_seq_len < 2 {
            return Err(Error::Config("max_seq_len must be at least 2".into()));
        }
        Ok(())
    }
}

/// An ordered collection of complete games.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transcripts {
    pub games: Vec<GameRecord>,
}

/// A board state eligible for labelling, tied back to its game and move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledState {
    pub game: u32,
    /// Zero-based move index; the board is the position after this move.
    pub timestep: u16,
    pub step: TrajectoryStep,
}

impl Transcripts {
    /// Games seeded `seed, seed + 1, ...`.
    pub fn generate(n_games: u32, seed: u64) -> Transcripts {
        Transcripts {
            games: (0..u64::from(n_games))
                .map(|i| random_game(seed.wrapping_add(i)))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.games.len()
    }

    pub fn is_empty(&self) -> bool {
        self.games.is_empty()
    }

    /// The first `states_per_game` post-move states of every game (all of
    /// them for shorter games), in game order.
    pub fn labeled_states(&self, states_per_game: usize) -> Vec<LabeledState> {
        let mut out = Vec::with_capacity(self.games.len() * states_per_game);
        for (g, game) in self.games.iter().enumerate() {
            for (t, step) in board_trajectory(game)
                .into_iter()
                .take(states_per_game)
                .enumerate()
            {
                out.push(LabeledState {
                    game: g as u32,
                    timestep: t as u16,
                    step,
                });
            }
        }
        out
    }

    /// The pass-resolved board after move `timestep` of `game`, for each
    /// row. Rows may come in any order.
    pub fn aligned_boards(&self, rows: &[RowRef]) -> Result<Vec<Board>> {
        let mut cached: Option<(u32, Vec<TrajectoryStep>)> = None;
        rows.iter()
            .map(|r| {
                if cached.as_ref().map(|c| c.0) != Some(r.game) {
                    let game = self.games.get(r.game as usize).ok_or_else(|| {
                        Error::Format(format!("row refers to game {} of {}", r.game, self.games.len()))
                    })?;
                    cached = Some((r.game, board_trajectory(game)));
                }
                let traj = &cached.as_ref().expect("just filled").1;
                traj.get(usize::from(r.timestep)).map(|s| s.board).ok_or_else(|| {
                    Error::Format(format!(
                        "row refers to move {} of a {}-move game",
                        r.timestep,
                        traj.len()
                    ))
                })
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MAGIC).u32(VERSION).u32(self.games.len() as u32);
        for g in &self.games {
            w.u8(g.len() as u8);
            for t in g.moves() {
                w.u8(t.index() as u8);
            }
        }
        w.into_inner()
    }

    /// Parses and replays every game; an illegal sequence is a format error.
    pub fn from_bytes(bytes: &[u8]) -> Result<Transcripts> {
        let mut r = ByteReader::new(bytes, "transcript");
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let n = r.u32()?;
        let mut games = Vec::with_capacity(n.min(1 << 20) as usize);
        for g in 0..n {
            let len = r.u8()? as usize;
            if len > MAX_MOVES {
                return Err(Error::Format(format!("game {g} claims {len} moves")));
            }
            let moves = r
                .take(len)?
                .iter()
                .map(|&t| Tile::new(usize::from(t)))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Format(format!("game {g}: {e}")))?;
            let game = GameRecord::replay(&moves)
                .map_err(|e| Error::Format(format!("game {g} does not replay: {e}")))?;
            games.push(game);
        }
        r.finish()?;
        Ok(Transcripts { games })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::binio::write_file(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Transcripts> {
        Transcripts::from_bytes(&read_file(path)?)
    }
}

/// Generates the games described by `manifest` and writes them to `path`.
pub fn generate_dataset(manifest: &DatasetManifest, path: &Path) -> Result<Transcripts> {
    manifest.validate()?;
    let t = Transcripts::generate(manifest.n_games, manifest.seed);
    t.write(path)?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip() {
        let t = Transcripts::generate(5, 42);
        let back = Transcripts::from_bytes(&t.to_bytes()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn state_quota() {
        let t = Transcripts::generate(4, 0);
        let states = t.labeled_states(52);
        let expected: usize = t.games.iter().map(|g| g.len().min(52)).sum();
        assert_eq!(states.len(), expected);
        assert!(states.iter().all(|s| s.timestep < 52));
    }

    #[test]
    fn aligned_boards_follow_rows() {
        let t = Transcripts::generate(3, 11);
        let states = t.labeled_states(10);
        let rows: Vec<RowRef> = states
            .iter()
            .rev()
            .map(|s| RowRef {
                game: s.game,
                timestep: s.timestep,
            })
            .collect();
        let boards = t.aligned_boards(&rows).unwrap();
        for (b, s) in boards.iter().zip(states.iter().rev()) {
            assert_eq!(*b, s.step.board);
        }
        assert!(t.aligned_boards(&[RowRef { game: 3, timestep: 0 }]).is_err());
        assert!(t
            .aligned_boards(&[RowRef {
                game: 0,
                timestep: 61
            }])
            .is_err());
    }

    #[test]
    fn manifest_validation() {
        let mut m = DatasetManifest {
            n_games: 0,
            seed: 1,
            max_seq_len: 64,
            states_per_game: 52,
        };
        assert!(m.validate().is_err());
        m.n_games = 3;
        assert!(m.validate().is_ok());
        m.states_per_game = 61;
        assert!(m.validate().is_err());
    }

    #[test]
    fn illegal_game_is_format_error() {
        let mut bytes = Transcripts::generate(1, 3).to_bytes();
        // First move of the first game: replace with a centre tile.
        bytes[13] = 27;
        assert!(matches!(Transcripts::from_bytes(&bytes), Err(Error::Format(_))));
    }
}
