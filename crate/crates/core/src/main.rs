// SPDX-License-Identifier: MIT OR Apache-2.0

//! `owml` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use owml::config::RunConfig;
use owml::pipeline::{run_all, run_named, verify_run};
use owml::Error;

#[derive(Parser)]
#[command(name = "owml", version, about = "Othello world-model lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one key; repeatable. Beats the file, loses to OWML_* variables.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Run directory (same as --set out_dir=DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate training and held-out game transcripts.
    GenData(Common),
    /// Train the transformer on next-move prediction.
    TrainGpt(Common),
    /// Dump residual-stream activations for every layer.
    ExtractActs(Common),
    /// Train sparse autoencoders for every layer and seed.
    TrainSae(Common),
    /// Train tile-state probes for every layer, mode and structure.
    TrainProbe(Common),
    /// Score autoencoder features against tile colour labels.
    ScoreColor(Common),
    /// Score autoencoder features against tile stability labels.
    ScoreStability(Common),
    /// Count MLP neurons aligned with the own-colour probe.
    AlignNeurons(Common),
    /// Build grids, curves and tables from stored scores.
    Report(Common),
    /// Run every stage in order.
    RunAll(Common),
    /// Re-hash a run directory against its stage manifests.
    Verify(Common),
    /// Print the resolved config, or every key with `--keys`.
    Config {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        keys: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::MissingInput(_) => 3,
        Error::NonFiniteValue(_) => 4,
        _ => 1,
    }
}

fn resolve(c: &Common) -> Result<RunConfig, Error> {
    let mut overrides = Vec::new();
    if let Some(out) = &c.out {
        overrides.push(format!("out_dir={}", out.display()));
    }
    overrides.extend(c.set.iter().cloned());
    let cfg = RunConfig::resolve(c.config.as_deref(), &overrides, std::env::vars())?;
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(cfg)
}

fn log_config(cfg: &RunConfig) {
    eprintln!("[owml] resolved config (hash {}):", cfg.hash());
    for line in cfg.to_text().lines() {
        eprintln!("[owml]   {line}");
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let (stage, common) = match &cli.command {
        Command::GenData(c) => ("gen-data", c),
        Command::TrainGpt(c) => ("train-gpt", c),
        Command::ExtractActs(c) => ("extract-acts", c),
        Command::TrainSae(c) => ("train-sae", c),
        Command::TrainProbe(c) => ("train-probe", c),
        Command::ScoreColor(c) => ("score-color", c),
        Command::ScoreStability(c) => ("score-stability", c),
        Command::AlignNeurons(c) => ("align-neurons", c),
        Command::Report(c) => ("report", c),
        Command::RunAll(c) => ("run-all", c),
        Command::Verify(c) => ("verify", c),
        Command::Config { common, keys } => {
            if *keys {
                print!("{}", RunConfig::describe());
            } else {
                print!("{}", resolve(common)?.to_text());
            }
            return Ok(());
        }
    };
    let cfg = resolve(common)?;
    match stage {
        "verify" => {
            let n = verify_run(&cfg.out_dir)?;
            println!("{n} file records verified under {}", cfg.out_dir.display());
        }
        "run-all" => {
            log_config(&cfg);
            run_all(&cfg)?;
        }
        s => {
            log_config(&cfg);
            run_named(s, &cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("owml: error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
