// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run configuration: `key = value` lines with `#` comments.
//!
//! Values resolve in order: built-in defaults, then the config
//! file, then `--set key=value` flags, then `OWML_<KEY>` environment
//! variables. Unknown keys are rejected at every layer.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gpt::{GptConfig, TrainHyper};
use crate::othello::EdgeAdjacency;
use crate::probes::{ProbeHyper, ProbeStructure};
use crate::sae::SaeHyper;

pub const ENV_PREFIX: &str = "OWML_";

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Option<Self>;
    fn render(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Option<Self> {
                s.parse().ok()
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
plain_value!(u32, u64, usize, f64, String);

impl ConfigValue for bool {
    fn parse_value(s: &str) -> Option<Self> {
        match s {
            "true" | "1" | "yes" => Some(true),
            "false" | "0" | "no" => Some(false),
            _ => None,
        }
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for PathBuf {
    fn parse_value(s: &str) -> Option<Self> {
        (!s.is_empty()).then(|| PathBuf::from(s))
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

impl ConfigValue for EdgeAdjacency {
    fn parse_value(s: &str) -> Option<Self> {
        match s {
            "4" => Some(EdgeAdjacency::Four),
            "8" => Some(EdgeAdjacency::Eight),
            _ => None,
        }
    }
    fn render(&self) -> String {
        match self {
            EdgeAdjacency::Four => "4".into(),
            EdgeAdjacency::Eight => "8".into(),
        }
    }
}

/// Comma-separated probe structures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Structures(pub Vec<ProbeStructure>);

impl ConfigValue for Structures {
    fn parse_value(s: &str) -> Option<Self> {
        let v: Option<Vec<_>> = s.split(',').map(|p| ProbeStructure::parse(p.trim())).collect();
        v.filter(|v| !v.is_empty()).map(Structures)
    }
    fn render(&self) -> String {
        let names: Vec<&str> = self.0.iter().map(|s| s.name()).collect();
        names.join(",")
    }
}

/// Whether colour tallies count a feature once or once per tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tally {
    BestTile,
    PerTile,
}

impl ConfigValue for Tally {
    fn parse_value(s: &str) -> Option<Self> {
        match s {
            "best-tile" => Some(Tally::BestTile),
            "per-tile" => Some(Tally::PerTile),
            _ => None,
        }
    }
    fn render(&self) -> String {
        match self {
            Tally::BestTile => "best-tile".into(),
            Tally::PerTile => "per-tile".into(),
        }
    }
}

macro_rules! run_config {
    ($($(#[doc = $doc:literal])* $key:ident : $t:ty = $default:expr;)*) => {
        /// Every tunable of the pipeline. See [`RunConfig::describe`].
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $($(#[doc = $doc])* pub $key: $t,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                RunConfig { $($key: $default,)* }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($key)),*];

            /// Assigns one key from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let value = value.trim();
                match key {
                    $(stringify!($key) => {
                        self.$key = <$t as ConfigValue>::parse_value(value).ok_or_else(|| {
                            Error::Config(format!("cannot parse {value:?} for key {key}"))
                        })?;
                    })*
                    _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
                }
                Ok(())
            }

            /// `(key, value)` pairs in declaration order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$((stringify!($key), self.$key.render())),*]
            }

            /// Key list with defaults and one-line descriptions.
            pub fn describe() -> String {
                let d = RunConfig::default();
                let mut s = String::new();
                $(
                    let doc: &[&str] = &[$($doc),*];
                    let _ = writeln!(
                        s,
                        "  {:<24} {:<20} {}",
                        stringify!($key),
                        d.$key.render(),
                        doc.join(" ").trim()
                    );
                )*
                s
            }
        }
    };
}

run_config! {
    /// Directory receiving every artifact.
    out_dir: PathBuf = PathBuf::from("owml-run");
    /// Games used to train the transformer.
    n_games: u32 = 10_000;
    /// Held-out games for evaluation and all interpretability stages.
    heldout_games: u32 = 2_000;
    /// Held-out games scored during training (a prefix of the held-out set).
    eval_games: u32 = 500;
    /// Seed of the training games; held-out games use a disjoint range.
    data_seed: u64 = 0;
    /// Board states kept per game for activations and labels.
    states_per_game: usize = 52;
    /// Transformer blocks.
    n_layers: usize = 4;
    /// Attention heads per block.
    n_heads: usize = 4;
    /// Residual width.
    d_model: usize = 128;
    /// MLP width as a multiple of d_model.
    mlp_ratio: usize = 4;
    /// Positional table length.
    max_seq_len: usize = 64;
    /// Peak Adam learning rate.
    lr: f64 = 1e-3;
    /// Sequences per step.
    batch_size: usize = 64;
    /// Optimiser steps.
    steps: u64 = 20_000;
    /// Linear warm-up steps.
    warmup: u64 = 200;
    /// Final learning rate as a fraction of the peak.
    min_lr_ratio: f64 = 0.1;
    /// Steps between held-out evaluations.
    eval_every: u64 = 500;
    /// Seed for weight init and batch order.
    train_seed: u64 = 0;
    /// Number of sparse autoencoder seeds per layer.
    sae_seeds: u64 = 10;
    /// Latent width; 0 means 2 * d_model.
    sae_d_latent: usize = 0;
    /// L1 penalty weight, on unit mean-square inputs.
    sae_lambda: f64 = 0.5;
    /// Adam learning rate for autoencoders.
    sae_lr: f64 = 1e-3;
    /// Rows per autoencoder step.
    sae_batch_size: usize = 256;
    /// Autoencoder steps.
    sae_steps: u64 = 4_000;
    /// Fraction of games held out of autoencoder training.
    sae_heldout_fraction: f64 = 0.1;
    /// Probe structures to train, comma separated.
    probe_structures: Structures = Structures(vec![
        ProbeStructure::PerTileIndependent,
        ProbeStructure::MulticlassLocation,
    ]);
    /// Adam learning rate for probes.
    probe_lr: f64 = 1e-2;
    /// Rows per probe step.
    probe_batch_size: usize = 1024;
    /// Probe steps.
    probe_steps: u64 = 2_000;
    /// Fraction of games used to train probes.
    probe_train_fraction: f64 = 0.8;
    /// Seed for probe splits and batches.
    probe_seed: u64 = 0;
    /// Also train shuffled-label control probes.
    probe_control: bool = true;
    /// |cosine| threshold for neuron-probe alignment.
    align_threshold: f64 = 0.2;
    /// Monte Carlo samples for the random-direction baseline.
    align_baseline_samples: usize = 100_000;
    /// AUROC a colour feature must exceed to be selected.
    color_threshold: f64 = 0.7;
    /// Colour features kept per seed.
    color_top_k: usize = 50;
    /// best-tile or per-tile colour tallies.
    color_tally: Tally = Tally::BestTile;
    /// AUROC a stability pair must exceed to be counted.
    stability_threshold: f64 = 0.8;
    /// Autoencoder seeds used for stability scoring.
    stability_seeds: u64 = 2;
    /// Edge neighbourhood for stability: 4 or 8.
    stability_adjacency: EdgeAdjacency = EdgeAdjacency::Four;
}

impl RunConfig {
    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip(e))))?;
        }
        Ok(())
    }

    /// Defaults, then `file`, then `overrides` (`key=value`), then the
    /// `OWML_*` variables in `env`.
    pub fn resolve(
        file: Option<&Path>,
        overrides: &[String],
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            if !path.exists() {
                return Err(Error::MissingInput(path.to_path_buf()));
            }
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_text(&text)
                .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip(e))))?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            cfg.set(k.trim(), v)?;
        }
        let mut vars: Vec<(String, String)> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        vars.sort();
        for (k, v) in vars {
            let key = k[ENV_PREFIX.len()..].to_ascii_lowercase();
            cfg.set(&key, &v)
                .map_err(|e| Error::Config(format!("environment {k}: {}", strip(e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text: one `key = value` line per key.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// SHA-256 of everything except `out_dir`, so moving a run does not
    /// change its identity.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if k != "out_dir" {
                h.update(format!("{k} = {v}\n"));
            }
        }
        hex(&h.finalize())
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset().validate()?;
        self.gpt().validate()?;
        self.train_hyper().validate()?;
        let positive = [
            ("heldout_games", self.heldout_games as u64),
            ("eval_games", self.eval_games as u64),
            ("sae_seeds", self.sae_seeds),
            ("sae_batch_size", self.sae_batch_size as u64),
            ("probe_batch_size", self.probe_batch_size as u64),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be at least 1")));
            }
        }
        if self.eval_games > self.heldout_games {
            return Err(Error::Config("eval_games cannot exceed heldout_games".into()));
        }
        if self.stability_seeds == 0 || self.stability_seeds > self.sae_seeds {
            return Err(Error::Config("stability_seeds must lie in 1..=sae_seeds".into()));
        }
        if self.sae_latent() < self.d_model {
            return Err(Error::Config("sae_d_latent must be at least d_model".into()));
        }
        if !(self.sae_lambda.is_finite() && self.sae_lambda >= 0.0) {
            return Err(Error::Config("sae_lambda must be finite and non-negative".into()));
        }
        for (k, v) in [
            ("sae_heldout_fraction", self.sae_heldout_fraction),
            ("probe_train_fraction", self.probe_train_fraction),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{k} must lie strictly between 0 and 1")));
            }
        }
        for (k, v) in [("sae_lr", self.sae_lr), ("probe_lr", self.probe_lr)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        Ok(())
    }

    pub fn dataset(&self) -> crate::dataset::DatasetManifest {
        crate::dataset::DatasetManifest {
            n_games: self.n_games,
            seed: self.data_seed,
            max_seq_len: self.max_seq_len,
            states_per_game: self.states_per_game,
        }
    }

    /// Seed of the first held-out game, past every training seed.
    pub fn heldout_seed(&self) -> u64 {
        self.data_seed
            .wrapping_add(u64::from(self.n_games))
            .wrapping_add(1_000_000_007)
    }

    pub fn gpt(&self) -> GptConfig {
        GptConfig {
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_model: self.d_model,
            vocab: crate::dataset::VOCAB_SIZE,
            max_seq_len: self.max_seq_len,
            mlp_ratio: self.mlp_ratio,
        }
    }

    pub fn train_hyper(&self) -> TrainHyper {
        TrainHyper {
            lr: self.lr,
            batch_size: self.batch_size,
            steps: self.steps,
            seed: self.train_seed,
            warmup: self.warmup,
            min_lr_ratio: self.min_lr_ratio,
            eval_every: self.eval_every,
        }
    }

    pub fn sae_latent(&self) -> usize {
        if self.sae_d_latent == 0 {
            2 * self.d_model
        } else {
            self.sae_d_latent
        }
    }

    pub fn sae_hyper(&self) -> SaeHyper {
        SaeHyper {
            lr: self.sae_lr,
            batch_size: self.sae_batch_size,
            steps: self.sae_steps,
            heldout_fraction: self.sae_heldout_fraction,
        }
    }

    pub fn probe_hyper(&self) -> ProbeHyper {
        ProbeHyper {
            lr: self.probe_lr,
            batch_size: self.probe_batch_size,
            steps: self.probe_steps,
            train_fraction: self.probe_train_fraction,
        }
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes
        .iter()
        .fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.set("steps", "12").unwrap();
        c.set("probe_structures", "multiclass").unwrap();
        c.set("stability_adjacency", "8").unwrap();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(RunConfig::KEYS.len(), c.entries().len());
    }

    #[test]
    fn comments_and_errors() {
        let c = RunConfig::parse("# desk\n\nsteps = 7  # short\n").unwrap();
        assert_eq!(c.steps, 7);
        let e = RunConfig::parse("stepz = 7").unwrap_err().to_string();
        assert!(e.contains("line 1") && e.contains("stepz"), "{e}");
        assert!(RunConfig::parse("steps 7").is_err());
        assert!(RunConfig::parse("steps = seven").is_err());
    }

    #[test]
    fn layering_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.cfg");
        std::fs::write(&path, "steps = 5\nlr = 0.5\nwarmup = 1\n").unwrap();
        let env = vec![
            ("OWML_WARMUP".to_string(), "3".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ];
        let c = RunConfig::resolve(Some(&path), &["lr=0.25".into(), "warmup=2".into()], env).unwrap();
        assert_eq!((c.steps, c.lr, c.warmup), (5, 0.25, 3));
        let bad_env = vec![("OWML_NOPE".to_string(), "1".to_string())];
        assert!(matches!(
            RunConfig::resolve(None, &[], bad_env),
            Err(Error::Config(_))
        ));
        let missing = dir.path().join("none.cfg");
        assert!(matches!(
            RunConfig::resolve(Some(&missing), &[], vec![]),
            Err(Error::MissingInput(_))
        ));
    }

    #[test]
    fn validation_and_hash() {
        let zero = RunConfig::resolve(None, &["n_games=0".into()], vec![]);
        assert!(matches!(zero, Err(Error::Config(_))));
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.steps += 1;
        assert_ne!(a.hash(), b.hash());
        assert!(RunConfig::describe().contains("sae_lambda"));
    }
}
