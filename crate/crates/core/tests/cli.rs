// SPDX-License-Identifier: MIT OR Apache-2.0

//! The `owml` binary: exit codes, cleanup, manifests and reruns.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = "\
# small enough to run in seconds
n_games = 120
heldout_games = 40
eval_games = 10
n_layers = 2
n_heads = 2
d_model = 16
batch_size = 8
steps = 12
eval_every = 6
sae_seeds = 2
sae_steps = 40
probe_steps = 20
align_baseline_samples = 500
";

fn owml(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_owml"));
    cmd.args(args);
    for (k, _) in std::env::vars() {
        if k.starts_with("OWML_") {
            cmd.env_remove(k);
        }
    }
    cmd.envs(envs.iter().copied());
    cmd.output().expect("binary runs")
}

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.cfg");
    fs::write(&p, TINY).unwrap();
    p
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        let Ok(entries) = fs::read_dir(&d) else { continue };
        for e in entries {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn zero_games_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = owml(
        &["gen-data", "--out", out.to_str().unwrap(), "--set", "n_games=0"],
        &[],
    );
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(files(&out).is_empty());
}

#[test]
fn unknown_keys_are_rejected_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "n_gmaes = 5\n").unwrap();
    assert_eq!(
        code(&owml(&["config", "--config", cfg.to_str().unwrap()], &[])),
        2
    );
    assert_eq!(code(&owml(&["config", "--set", "nope=1"], &[])), 2);
    assert_eq!(code(&owml(&["config"], &[("OWML_NOPE", "1")])), 2);
}

#[test]
fn precedence_is_file_then_flag_then_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("a.cfg");
    fs::write(&cfg, "steps = 1\nwarmup = 1\nlr = 0.5\n").unwrap();
    let o = owml(
        &[
            "config",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "warmup=2",
            "--set",
            "lr=0.25",
        ],
        &[("OWML_LR", "0.125")],
    );
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("steps = 1\n"));
    assert!(text.contains("warmup = 2\n"));
    assert!(text.contains("lr = 0.125\n"));
}

#[test]
fn missing_inputs_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    for stage in ["train-gpt", "extract-acts", "report"] {
        let o = owml(&[stage, "--out", out.to_str().unwrap()], &[]);
        assert_eq!(code(&o), 3, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let missing = dir.path().join("absent.cfg");
    assert_eq!(
        code(&owml(&["gen-data", "--config", missing.to_str().unwrap()], &[])),
        3
    );
}

#[test]
fn failed_stage_leaves_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("run");
    let base = ["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    for stage in ["gen-data", "train-gpt", "extract-acts", "train-sae"] {
        let o = owml(&[&[stage][..], &base[..]].concat(), &[]);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    // Scoring writes seed 0 of layer 1, then fails on the missing seed 1.
    fs::remove_file(out.join("sae/layer1_seed1.ockp")).unwrap();
    let o = owml(&[&["score-color"][..], &base[..]].concat(), &[]);
    assert_eq!(code(&o), 3);
    assert!(!out.join("scores").exists() || files(&out.join("scores")).is_empty());
    assert!(!out.join("manifests/score-color.json").exists());
}

#[test]
fn diverging_training_exits_four_and_keeps_last_good_weights() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("run");
    let base = ["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert_eq!(code(&owml(&[&["gen-data"][..], &base[..]].concat(), &[])), 0);
    let o = owml(
        &[
            &["train-gpt"][..],
            &base[..],
            &["--set", "lr=1e38", "--set", "warmup=0"],
        ]
        .concat(),
        &[],
    );
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.join("model/gpt.ockp").exists());
    assert!(out.join("model/gpt.nonfinite.ockp").exists());
    assert!(!out.join("manifests/train-gpt.json").exists());
}

#[test]
fn run_all_is_complete_verifiable_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = owml(
            &[
                "run-all",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--threads",
                "1",
            ],
            &[],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a");
    let b = run("b");

    let listing = files(&a);
    for want in [
        "data/train.othl",
        "model/gpt.ockp",
        "acts/layer2.oact",
        "sae/layer2_seed1.ockp",
        "probes/accuracy.csv",
        "scores/color_layer1_seed0.csv",
        "scores/stability_layer2_seed1.csv",
        "align/summary.csv",
        "report/color_grid_layer2.svg",
        "report/stability_table_seed0.csv",
        "report/probe_accuracy.svg",
        "manifests/report.json",
    ] {
        assert!(listing.contains(&PathBuf::from(want)), "missing {want}");
    }
    assert_eq!(listing, files(&b));
    for f in &listing {
        if f.starts_with("manifests") {
            continue;
        }
        assert!(
            fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap(),
            "{} differs",
            f.display()
        );
    }

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifests/extract-acts.json")).unwrap()).unwrap();
    let inputs: Vec<&str> = manifest["inputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["path"].as_str().unwrap())
        .collect();
    assert_eq!(inputs, ["model/gpt.ockp", "data/heldout.othl"]);
    assert_eq!(manifest["config"]["d_model"], "16");

    let o = owml(&["verify", "--out", a.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    fs::write(a.join("acts/layer1.oact"), b"tampered").unwrap();
    assert_ne!(code(&owml(&["verify", "--out", a.to_str().unwrap()], &[])), 0);
}
