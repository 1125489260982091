// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::dataset::{MAX_MOVES, VOCAB_SIZE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GptConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub vocab: usize,
    /// Number of learned positions.
    pub max_seq_len: usize,
    pub mlp_ratio: usize,
}

impl GptConfig {
    /// 8 layers, 8 heads, width 512.
    pub fn full() -> Self {
        GptConfig {
            n_layers: 8,
            n_heads: 8,
            d_model: 512,
            ..GptConfig::desk()
        }
    }

    /// 4 layers, 4 heads, width 128.
    pub fn desk() -> Self {
        GptConfig {
            n_layers: 4,
            n_heads: 4,
            d_model: 128,
            vocab: VOCAB_SIZE,
            max_seq_len: MAX_MOVES + 1,
            mlp_ratio: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab != VOCAB_SIZE {
            return Err(Error::Config(format!(
                "vocab must be {VOCAB_SIZE}, got {}",
                self.vocab
            )));
        }
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.mlp_ratio == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.max_seq_len < MAX_MOVES {
            return Err(Error::Config(format!(
                "max_seq_len {} cannot hold a {MAX_MOVES}-move game",
                self.max_seq_len
            )));
        }
        Ok(())
    }

    pub fn d_mlp(&self) -> usize {
        self.d_model * self.mlp_ratio
    }

    /// Parameter count implied by the shapes, biases and norms included.
    pub fn parameter_count(&self) -> usize {
        let d = self.d_model;
        let dm = self.d_mlp();
        let per_block = 2 * 2 * d          // two layer norms
            + d * 3 * d + 3 * d            // qkv
            + d * d + d                    // attention output
            + d * dm + dm                  // mlp encoding
            + dm * d + d; // mlp projection
        self.vocab * d + self.max_seq_len * d + self.n_layers * per_block + 2 * d + d * self.vocab
    }
}
