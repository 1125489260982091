// SPDX-License-Identifier: MIT OR Apache-2.0

//! Hand-written forward/backward kernels, Adam, checkpoints and a
//! finite-difference gradient checker. Enough to train the transformer,
//! the sparse autoencoders and the probes without an ML framework.

mod attention;
pub mod checkpoint;
mod gradcheck;
pub mod ops;
mod params;
mod tensor;

pub use attention::{causal_attention, causal_attention_backward, AttentionCache};
pub use checkpoint::{Checkpoint, Section};
pub use gradcheck::{grad_check, relative_error, FnObjective, GradCheckReport, Objective, ParamError};
pub use params::{adam_step, AdamConfig, Param, ParamStore, INIT_STD};
pub use tensor::{dot, Scalar, Tensor2D};
