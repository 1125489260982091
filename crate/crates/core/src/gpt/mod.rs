// SPDX-License-Identifier: MIT OR Apache-2.0

//! The sequence model: configuration, forward/backward, training and
//! residual-stream extraction.

mod config;
mod eval;
mod model;
mod train;

pub use config::GptConfig;
pub use eval::{
    chance_legal_rate, extract_activations, gpt_checkpoint, gpt_from_checkpoint, heldout_loss,
    legal_move_rate, load_gpt, rate_from_predictions, save_gpt, CONTEXT, EVAL_CHUNK,
};
pub use model::{init_params, token_loss, Batch, ForwardPass, Gpt, ResidualStreamRecord};
pub use train::{train, MetricsRow, TrainHyper, TrainLog};
