// SPDX-License-Identifier: MIT OR Apache-2.0

//! 66-token vocabulary: 64 tiles, a padding token and end-of-sequence.

use crate::error::{Error, Result};
use crate::othello::{GameRecord, Tile};

pub const VOCAB_SIZE: usize = 66;
pub const PAD: u8 = 64;
pub const EOS: u8 = 65;
/// Longest possible game.
pub const MAX_MOVES: usize = 60;
/// 60 moves plus EOS, padded to 64.
pub const DEFAULT_MAX_SEQ_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    tokens: Vec<u8>,
}

impl TokenSequence {
    /// Validates the layout: tiles, then at most one EOS, then only PAD.
    pub fn new(tokens: Vec<u8>) -> Result<TokenSequence> {
        let mut seen_eos = false;
        let mut seen_pad = false;
        for (i, &t) in tokens.iter().enumerate() {
            match t {
                0..=63 if !seen_eos && !seen_pad => {}
                EOS if !seen_eos && !seen_pad => seen_eos = true,
                PAD => seen_pad = true,
                t if usize::from(t) >= VOCAB_SIZE => {
                    return Err(Error::TokenOutOfRange {
                        token: usize::from(t),
                        position: i,
                        vocab: VOCAB_SIZE,
                    })
                }
                _ => {
                    return Err(Error::InvalidTokens(format!(
                        "token {t} at position {i} follows EOS or PAD"
                    )))
                }
            }
        }
        Ok(TokenSequence { tokens })
    }

    pub fn tokens(&self) -> &[u8] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of move tokens before EOS/PAD.
    pub fn n_moves(&self) -> usize {
        self.tokens.iter().take_while(|&&t| t < PAD).count()
    }
}

/// Moves, then EOS, then PAD up to `max_seq_len`. Games longer than
/// `max_seq_len - 1` moves are truncated so EOS still fits.
pub fn tokenize(game: &GameRecord, max_seq_len: usize) -> Result<TokenSequence> {
    tokenize_moves(game.moves(), max_seq_len)
}

/// [`tokenize`] over a bare move list; legality is not checked here.
pub fn tokenize_moves(moves: &[Tile], max_seq_len: usize) -> Result<TokenSequence> {
    if moves.is_empty() {
        return Err(Error::EmptyGame);
    }
    if max_seq_len < 2 {
        return Err(Error::Config(format!(
            "max_seq_len {max_seq_len} leaves no room for a move and EOS"
        )));
    }
    let keep = moves.len().min(max_seq_len - 1);
    let mut tokens: Vec<u8> = moves[..keep].iter().map(|t| t.index() as u8).collect();
    tokens.push(EOS);
    tokens.resize(max_seq_len, PAD);
    Ok(TokenSequence { tokens })
}

/// Tile moves preceding EOS/PAD.
pub fn detokenize(seq: &TokenSequence) -> Vec<Tile> {
    seq.tokens
        .iter()
        .take_while(|&&t| t < PAD)
        .map(|&t| Tile::new(usize::from(t)).expect("validated token"))
        .collect()
}
