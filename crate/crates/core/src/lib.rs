// SPDX-License-Identifier: MIT OR Apache-2.0

//! Othello world-model lab: a rules engine, a small transformer trained on
//! random games, and the tools used to look inside it (sparse autoencoders,
//! linear probes, neuron alignment and feature scoring).

// Index loops read more clearly than iterator chains in the numeric kernels.
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod binio;
pub mod config;
pub mod dataset;
pub mod diffcompute;
pub mod error;
pub mod gpt;
pub mod othello;
pub mod pipeline;
pub mod probes;
pub mod rng;
pub mod sae;

pub use error::{Error, Result};
