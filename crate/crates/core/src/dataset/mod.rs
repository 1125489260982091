// SPDX-License-Identifier: MIT OR Apache-2.0

//! Tokenisation, synthetic game datasets and the on-disk formats for
//! transcripts and activation dumps.
//!
//! Labels are never stored: tile-colour and stability labels are
//! recomputed from replayed boards whenever they are needed.

mod activations;
mod tokens;
mod transcript;

pub use activations::{read_activations, write_activations, ActivationSet, RowRef};
pub use tokens::{
    detokenize, tokenize, tokenize_moves, TokenSequence, DEFAULT_MAX_SEQ_LEN, EOS, MAX_MOVES, PAD, VOCAB_SIZE,
};
pub use transcript::{generate_dataset, DatasetManifest, LabeledState, Transcripts};
