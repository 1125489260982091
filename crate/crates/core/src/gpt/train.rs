// SPDX-License-Identifier: MIT OR Apache-2.0

//! Adam training loop with cosine decay and periodic held-out evaluation.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::eval::{heldout_loss, legal_move_rate, save_gpt, CONTEXT};
use super::model::{Batch, Gpt};
use crate::dataset::TokenSequence;
use crate::diffcompute::{adam_step, AdamConfig};
use crate::error::{Error, Result};
use crate::othello::GameRecord;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub lr: f64,
    pub batch_size: usize,
    pub steps: u64,
    pub seed: u64,
    /// Linear warm-up length in steps.
    pub warmup: u64,
    /// Cosine decay ends at `lr * min_lr_ratio`.
    pub min_lr_ratio: f64,
    /// Held-out metrics every this many steps (and at 0 and the end).
    pub eval_every: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            lr: 1e-3,
            batch_size: 64,
            steps: 20_000,
            seed: 0,
            warmup: 200,
            min_lr_ratio: 0.1,
            eval_every: 500,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config("batch_size and eval_every must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.min_lr_ratio) {
            return Err(Error::Config("min_lr_ratio must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Learning rate for 1-based `step`.
    pub fn lr_at(&self, step: u64) -> f64 {
        if step <= self.warmup {
            return self.lr * step as f64 / self.warmup.max(1) as f64;
        }
        let span = self.steps.saturating_sub(self.warmup).max(1) as f64;
        let progress = ((step - self.warmup) as f64 / span).min(1.0);
        let floor = self.lr * self.min_lr_ratio;
        floor + 0.5 * (self.lr - floor) * (1.0 + (PI * progress).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub loss: f64,
    pub legal_move_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// Held-out loss and legal-move rate at evaluation steps.
    pub metrics: Vec<MetricsRow>,
    /// Training-batch loss of every step.
    pub train_loss: Vec<f64>,
}

impl TrainLog {
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("step,loss,legal_move_rate\n");
        for r in &self.metrics {
            let _ = writeln!(s, "{},{:.6},{:.6}", r.step, r.loss, r.legal_move_rate);
        }
        s
    }

    pub fn train_loss_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for (i, l) in self.train_loss.iter().enumerate() {
            let _ = writeln!(s, "{},{:.6}", i + 1, l);
        }
        s
    }
}

/// Trains `model` in place on next-token prediction. Sequences must hold
/// at least 61 tokens. When `checkpoint` is given, the model is written
/// there at the end, or, if a step goes non-finite, the last finite
/// parameters are written before the error is returned.
pub fn train(
    model: &mut Gpt<f32>,
    data: &[TokenSequence],
    heldout: &[GameRecord],
    hyper: &TrainHyper,
    checkpoint: Option<&Path>,
    mut progress: impl FnMut(&MetricsRow),
) -> Result<TrainLog> {
    hyper.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle = rng::derived(hyper.seed, "gpt-shuffle");
    let mut cursor = order.len();

    let evaluate = |m: &Gpt<f32>, step: u64| -> Result<MetricsRow> {
        Ok(MetricsRow {
            step,
            loss: heldout_loss(m, heldout)?,
            legal_move_rate: legal_move_rate(m, heldout)?,
        })
    };
    if !heldout.is_empty() {
        let row = evaluate(model, 0)?;
        progress(&row);
        log.metrics.push(row);
    }

    for step in 1..=hyper.steps {
        let mut picked = Vec::with_capacity(hyper.batch_size);
        while picked.len() < hyper.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut shuffle);
                cursor = 0;
            }
            picked.push(&data[order[cursor]]);
            cursor += 1;
        }
        let batch = Batch::next_token(&picked, CONTEXT)?;
        let loss = model.loss_and_grad(&batch)?;
        let cfg = AdamConfig {
            lr: hyper.lr_at(step),
            ..AdamConfig::default()
        };
        let stepped = if loss.is_finite() {
            adam_step(model.params_mut(), &cfg, step)
        } else {
            Err(Error::NonFiniteValue(format!("training loss at step {step}")))
        };
        if let Err(e) = stepped {
            if let Some(path) = checkpoint {
                model.params_mut().zero_grads();
                save_gpt(model, path)?;
            }
            return Err(e);
        }
        log.train_loss.push(loss);

        if !heldout.is_empty() && (step % hyper.eval_every == 0 || step == hyper.steps) {
            let row = evaluate(model, step)?;
            progress(&row);
            log.metrics.push(row);
        }
    }
    if let Some(path) = checkpoint {
        save_gpt(model, path)?;
    }
    Ok(log)
}
