// SPDX-License-Identifier: MIT OR Apache-2.0

//! Held-out evaluation, activation extraction and model files.

use std::path::Path;

use rayon::prelude::*;

use super::config::GptConfig;
use super::model::{token_loss, Batch, Gpt};
use crate::dataset::{tokenize, ActivationSet, RowRef, TokenSequence, MAX_MOVES, VOCAB_SIZE};
use crate::diffcompute::{Checkpoint, Section, Tensor2D};
use crate::error::{Error, Result};
use crate::othello::{board_trajectory, GameRecord};

/// Sequences per forward pass during evaluation and extraction.
pub const EVAL_CHUNK: usize = 64;
/// Positions fed to the model: every move of a full game except the last.
pub const CONTEXT: usize = MAX_MOVES;

fn sequences(games: &[GameRecord]) -> Result<Vec<TokenSequence>> {
    games.iter().map(|g| tokenize(g, CONTEXT + 1)).collect()
}

/// Mean next-token loss over every unmasked position of `games`.
pub fn heldout_loss(model: &Gpt<f32>, games: &[GameRecord]) -> Result<f64> {
    let seqs = sequences(games)?;
    let parts: Vec<(f64, usize)> = seqs
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let refs: Vec<_> = chunk.iter().collect();
            let b = Batch::next_token(&refs, CONTEXT)?;
            let n = b.targets.iter().filter(|t| t.is_some()).count();
            let pass = model.forward(&b)?;
            Ok((token_loss(&pass.logits, &b.targets)? * n as f64, n))
        })
        .collect::<Result<_>>()?;
    let (sum, n) = parts.iter().fold((0.0, 0), |(s, c), &(l, k)| (s + l, c + k));
    if n == 0 {
        return Err(Error::AllMasked);
    }
    Ok(sum / n as f64)
}

/// Positions scored by the legal-move metric: after each move that is
/// followed by another move. Yields `(game, t, legal mask)`.
fn scored_positions(games: &[GameRecord]) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
    games.iter().enumerate().flat_map(|(g, game)| {
        let traj = board_trajectory(game);
        let n = traj.len().saturating_sub(1);
        traj.into_iter()
            .take(n)
            .enumerate()
            .map(move |(t, s)| (g, t, s.board.legal_moves()))
    })
}

/// Fraction of scored positions whose argmax token is legal for the
/// player to move next.
pub fn legal_move_rate(model: &Gpt<f32>, games: &[GameRecord]) -> Result<f64> {
    let seqs = sequences(games)?;
    let argmax: Vec<Vec<usize>> = seqs
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let refs: Vec<_> = chunk.iter().collect();
            let pass = model.forward(&Batch::next_token(&refs, CONTEXT)?)?;
            Ok((0..pass.logits.rows())
                .map(|r| argmax_row(pass.logits.row(r)))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(rate_from_predictions(games, |g, t| {
        argmax[g / EVAL_CHUNK][(g % EVAL_CHUNK) * CONTEXT + t]
    }))
}

/// Legal-move rate for any predictor `f(game, t) -> token`.
pub fn rate_from_predictions(games: &[GameRecord], f: impl Fn(usize, usize) -> usize) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for (g, t, legal) in scored_positions(games) {
        let tok = f(g, t);
        if tok < 64 && legal >> tok & 1 == 1 {
            hit += 1;
        }
        total += 1;
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Expected rate of a uniform guess over the whole vocabulary.
pub fn chance_legal_rate(games: &[GameRecord]) -> f64 {
    let (mut sum, mut total) = (0.0, 0usize);
    for (_, _, legal) in scored_positions(games) {
        sum += f64::from(legal.count_ones()) / VOCAB_SIZE as f64;
        total += 1;
    }
    if total == 0 {
        0.0
    } else {
        sum / total as f64
    }
}

fn argmax_row(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Residual stream after block `layer` (1-based) for the first
/// `states_per_game` move positions of every game.
pub fn extract_activations(
    model: &Gpt<f32>,
    games: &[GameRecord],
    layer: usize,
    states_per_game: usize,
) -> Result<ActivationSet> {
    let n_layers = model.config().n_layers;
    if layer == 0 || layer > n_layers {
        return Err(Error::LayerOutOfRange { layer, n_layers });
    }
    let seqs = sequences(games)?;
    let d = model.config().d_model;
    let chunks: Vec<(Vec<f32>, Vec<RowRef>)> = seqs
        .par_chunks(EVAL_CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let refs: Vec<_> = chunk.iter().collect();
            let pass = model.forward(&Batch::next_token(&refs, CONTEXT)?)?;
            let res = &pass.residuals[layer - 1];
            let mut data = Vec::new();
            let mut align = Vec::new();
            for (i, s) in chunk.iter().enumerate() {
                let g = ci * EVAL_CHUNK + i;
                for t in 0..s.n_moves().min(states_per_game).min(CONTEXT) {
                    data.extend_from_slice(res.row(i * CONTEXT + t));
                    align.push(RowRef {
                        game: g as u32,
                        timestep: t as u16,
                    });
                }
            }
            Ok((data, align))
        })
        .collect::<Result<_>>()?;
    let mut data = Vec::new();
    let mut alignment = Vec::new();
    for (d, a) in chunks {
        data.extend(d);
        alignment.extend(a);
    }
    let rows = alignment.len();
    ActivationSet::new(layer as u16, Tensor2D::from_vec(rows, d, data)?, alignment)
}

const META: &str = "meta.gpt";

pub fn gpt_checkpoint(model: &Gpt<f32>) -> Checkpoint {
    let c = model.config();
    let mut ck = Checkpoint::from_params(model.params());
    let words: Vec<u32> = [
        c.n_layers,
        c.n_heads,
        c.d_model,
        c.vocab,
        c.max_seq_len,
        c.mlp_ratio,
    ]
    .iter()
    .map(|&v| v as u32)
    .collect();
    ck.push(Section::words(META, &words));
    ck
}

pub fn save_gpt(model: &Gpt<f32>, path: &Path) -> Result<()> {
    gpt_checkpoint(model).write(path)
}

pub fn gpt_from_checkpoint(ck: &Checkpoint) -> Result<Gpt<f32>> {
    let w = ck.section(META)?.as_words();
    if w.len() != 6 {
        return Err(Error::Format(format!("{META} has {} words, expected 6", w.len())));
    }
    let cfg = GptConfig {
        n_layers: w[0] as usize,
        n_heads: w[1] as usize,
        d_model: w[2] as usize,
        vocab: w[3] as usize,
        max_seq_len: w[4] as usize,
        mlp_ratio: w[5] as usize,
    };
    cfg.validate()?;
    let template = super::model::init_params::<f32>(&cfg, 0)?;
    Gpt::from_params(cfg, ck.restore_params(&template)?)
}

pub fn load_gpt(path: &Path) -> Result<Gpt<f32>> {
    gpt_from_checkpoint(&Checkpoint::read(path)?)
}
