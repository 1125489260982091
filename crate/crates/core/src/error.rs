// SPDX-License-Identifier: MIT OR Apache-2.0

//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced anywhere in the lab pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("illegal move: tile {tile} is not a legal move for the side to move")]
    IllegalMove { tile: u8 },

    #[error("tile index {0} is outside 0..64")]
    TileOutOfRange(usize),

    #[error("invalid board: {0}")]
    InvalidBoard(String),

    #[error("game has no moves")]
    EmptyGame,

    #[error("token {token} at position {position} is out of range for a {vocab}-token vocabulary")]
    TokenOutOfRange {
        token: usize,
        position: usize,
        vocab: usize,
    },

    #[error("malformed token sequence: {0}")]
    InvalidTokens(String),

    #[error("layer {layer} out of range 1..={n_layers}")]
    LayerOutOfRange { layer: usize, n_layers: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFiniteValue(String),

    #[error("every target position is masked")]
    AllMasked,

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("zero-length vector in cosine similarity")]
    ZeroVector,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("labels contain a single class; AUROC is undefined")]
    SingleClass,

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated file: {0}")]
    TruncatedFile(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),

    #[error("I/O failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
