// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pipeline stages. Each stage reads artifacts under the run directory,
//! writes its own, and records a JSON manifest with content hashes of
//! both, so a run can be checked end to end with [`verify_run`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    self, accuracy_csv, accuracy_svg, aggregate_seed_frequency, best_mode_scores, emit_heatmap,
    feature_frequency_csv, pairs_per_layer, parse_accuracy_csv, parse_score_table, score_features,
    score_table_csv, stability_feature_frequency, stability_scores, stability_tile_frequency,
    top_color_features, AccuracyPoint, FeatureScore, LabelGroups, TallyMode,
};
use crate::config::{hex, RunConfig, Tally};
use crate::dataset::{read_activations, tokenize, write_activations, ActivationSet, Transcripts};
use crate::error::{Error, Result};
use crate::gpt::{chance_legal_rate, extract_activations, load_gpt, train, Gpt, CONTEXT};
use crate::othello::{stability_map_with, TileMode};
use crate::probes::{
    neuron_probe_alignment, neuron_vectors, probe_labels, random_alignment_baseline, train_probe,
    MlpSublayer, ProbeModel, ProbeStructure,
};
use crate::sae::{feature_activations, train_sae, SaeModel};

/// Every stage in pipeline order.
pub const STAGES: [&str; 9] = [
    "gen-data",
    "train-gpt",
    "extract-acts",
    "train-sae",
    "train-probe",
    "score-color",
    "score-stability",
    "align-neurons",
    "report",
];

pub mod paths {
    //! Artifact locations relative to the run directory.

    use crate::othello::TileMode;
    use crate::probes::{MlpSublayer, ProbeStructure};

    pub const TRAIN_GAMES: &str = "data/train.othl";
    pub const HELDOUT_GAMES: &str = "data/heldout.othl";
    pub const GPT: &str = "model/gpt.ockp";
    pub const GPT_NONFINITE: &str = "model/gpt.nonfinite.ockp";
    pub const TRAIN_METRICS: &str = "model/metrics.csv";
    pub const TRAIN_LOSS: &str = "model/train_loss.csv";
    pub const SAE_SUMMARY: &str = "sae/summary.csv";
    pub const PROBE_ACCURACY: &str = "probes/accuracy.csv";
    pub const ALIGN_SUMMARY: &str = "align/summary.csv";

    pub fn acts(layer: usize) -> String {
        format!("acts/layer{layer}.oact")
    }

    pub fn sae(layer: usize, seed: u64) -> String {
        format!("sae/layer{layer}_seed{seed}.ockp")
    }

    pub fn probe(layer: usize, mode: TileMode, structure: ProbeStructure) -> String {
        format!("probes/layer{layer}_{}_{}.ockp", mode.name(), structure.name())
    }

    pub fn color_scores(layer: usize, seed: u64) -> String {
        format!("scores/color_layer{layer}_seed{seed}.csv")
    }

    pub fn stability_scores(layer: usize, seed: u64) -> String {
        format!("scores/stability_layer{layer}_seed{seed}.csv")
    }

    pub fn alignment(layer: usize, sublayer: MlpSublayer) -> String {
        format!("align/layer{layer}_{}.csv", sublayer.name())
    }

    pub fn manifest(stage: &str) -> String {
        format!("manifests/{stage}.json")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub wall_time_secs: f64,
    pub finished_unix: u64,
}

fn sha256_file(path: &Path) -> Result<FileRecord> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileRecord {
        path: String::new(),
        sha256: hex(&Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

/// Tracks the files one stage touches.
pub struct StageCtx<'a> {
    pub cfg: &'a RunConfig,
    root: PathBuf,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl StageCtx<'_> {
    /// Absolute path of an input that must already exist.
    pub fn input(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if !p.is_file() {
            return Err(Error::MissingInput(p));
        }
        if !self.inputs.iter().any(|i| i == rel) {
            self.inputs.push(rel.to_string());
        }
        Ok(p)
    }

    /// Absolute path of an output; parent directories are created and
    /// the file is removed again if the stage fails.
    pub fn output(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        if !self.outputs.iter().any(|o| o == rel) {
            self.outputs.push(rel.to_string());
        }
        Ok(p)
    }

    pub fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        let p = self.output(rel)?;
        fs::write(&p, contents).map_err(|e| Error::io(&p, e))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn records(&self, rels: &[String]) -> Result<Vec<FileRecord>> {
        rels.iter()
            .map(|r| {
                Ok(FileRecord {
                    path: r.clone(),
                    ..sha256_file(&self.root.join(r))?
                })
            })
            .collect()
    }
}

/// Runs `body` as stage `name`. On success the manifest is written; on
/// failure every declared output and any stale manifest are removed.
pub fn run_stage(
    name: &str,
    cfg: &RunConfig,
    body: impl FnOnce(&mut StageCtx) -> Result<()>,
) -> Result<StageManifest> {
    let start = Instant::now();
    let mut ctx = StageCtx {
        cfg,
        root: cfg.out_dir.clone(),
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    let manifest_path = ctx.root.join(paths::manifest(name));
    let _ = fs::remove_file(&manifest_path);
    let result = body(&mut ctx).and_then(|()| {
        let manifest = StageManifest {
            stage: name.to_string(),
            config_hash: cfg.hash(),
            config: cfg
                .entries()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            inputs: ctx.records(&ctx.inputs)?,
            outputs: ctx.records(&ctx.outputs)?,
            wall_time_secs: start.elapsed().as_secs_f64(),
            finished_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        };
        let json =
            serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        crate::binio::write_file(&manifest_path, json.as_bytes())?;
        Ok(manifest)
    });
    if result.is_err() {
        for rel in &ctx.outputs {
            let _ = fs::remove_file(ctx.root.join(rel));
        }
        let _ = fs::remove_file(&manifest_path);
    }
    result
}

/// Runs the named stage.
pub fn run_named(name: &str, cfg: &RunConfig) -> Result<StageManifest> {
    let body: fn(&mut StageCtx) -> Result<()> = match name {
        "gen-data" => gen_data,
        "train-gpt" => train_gpt,
        "extract-acts" => extract_acts,
        "train-sae" => train_saes,
        "train-probe" => train_probes,
        "score-color" => score_color,
        "score-stability" => score_stability,
        "align-neurons" => align_neurons,
        "report" => report,
        other => return Err(Error::Config(format!("unknown stage {other:?}"))),
    };
    log(&format!("stage {name} starting"));
    let m = run_stage(name, cfg, body)?;
    log(&format!("stage {name} done in {:.1}s", m.wall_time_secs));
    Ok(m)
}

/// Every stage in order.
pub fn run_all(cfg: &RunConfig) -> Result<Vec<StageManifest>> {
    STAGES.iter().map(|s| run_named(s, cfg)).collect()
}

fn log(msg: &str) {
    eprintln!("[owml] {msg}");
}

/// Checks every manifest under the run: recorded outputs still hash the
/// same, and every input matches the output record of the stage that
/// produced it. Returns the number of files checked.
pub fn verify_run(root: &Path) -> Result<usize> {
    let mut produced: BTreeMap<String, String> = BTreeMap::new();
    let mut manifests = Vec::new();
    for stage in STAGES {
        let p = root.join(paths::manifest(stage));
        if !p.exists() {
            continue;
        }
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let m: StageManifest =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
        for o in &m.outputs {
            produced.insert(o.path.clone(), o.sha256.clone());
        }
        manifests.push(m);
    }
    let mut checked = 0;
    for m in &manifests {
        for rec in m.outputs.iter().chain(&m.inputs) {
            let path = root.join(&rec.path);
            if !path.exists() {
                return Err(Error::MissingInput(path));
            }
            let now = sha256_file(&path)?.sha256;
            if now != rec.sha256 {
                return Err(Error::Format(format!(
                    "{} changed since stage {}",
                    rec.path, m.stage
                )));
            }
            if let Some(h) = produced.get(&rec.path) {
                if *h != rec.sha256 {
                    return Err(Error::Format(format!(
                        "{} in stage {} does not match its producer",
                        rec.path, m.stage
                    )));
                }
            }
            checked += 1;
        }
    }
    Ok(checked)
}

fn gen_data(ctx: &mut StageCtx) -> Result<()> {
    let cfg = ctx.cfg;
    cfg.dataset().validate()?;
    let train = Transcripts::generate(cfg.n_games, cfg.data_seed);
    let held = Transcripts::generate(cfg.heldout_games, cfg.heldout_seed());
    train.write(&ctx.output(paths::TRAIN_GAMES)?)?;
    held.write(&ctx.output(paths::HELDOUT_GAMES)?)?;
    log(&format!(
        "{} training and {} held-out games",
        train.len(),
        held.len()
    ));
    Ok(())
}

fn train_gpt(ctx: &mut StageCtx) -> Result<()> {
    let cfg = ctx.cfg;
    let train_set = Transcripts::read(&ctx.input(paths::TRAIN_GAMES)?)?;
    let held = Transcripts::read(&ctx.input(paths::HELDOUT_GAMES)?)?;
    let eval = &held.games[..(cfg.eval_games as usize).min(held.len())];
    let seqs = train_set
        .games
        .iter()
        .map(|g| tokenize(g, CONTEXT + 1))
        .collect::<Result<Vec<_>>>()?;
    let mut model = Gpt::init(cfg.gpt(), cfg.train_seed)?;
    log(&format!(
        "{} parameters; chance legal-move rate {:.4}",
        model.params().num_elements(),
        chance_legal_rate(eval)
    ));
    let ckpt = ctx.output(paths::GPT)?;
    let started = Instant::now();
    let result = train(&mut model, &seqs, eval, &cfg.train_hyper(), Some(&ckpt), |r| {
        log(&format!(
            "step {:>6}  heldout loss {:.4}  legal {:.4}  {:.0}s",
            r.step,
            r.loss,
            r.legal_move_rate,
            started.elapsed().as_secs_f64()
        ))
    });
    let log_rows = match result {
        Ok(l) => l,
        Err(e) => {
            // Keep the last finite weights for inspection; the regular
            // output is still cleaned up.
            if matches!(e, Error::NonFiniteValue(_)) && ckpt.exists() {
                let keep = ctx.root().join(paths::GPT_NONFINITE);
                let _ = fs::rename(&ckpt, keep);
            }
            return Err(e);
        }
    };
    ctx.write(paths::TRAIN_METRICS, &log_rows.metrics_csv())?;
    ctx.write(paths::TRAIN_LOSS, &log_rows.train_loss_csv())?;
    Ok(())
}

fn extract_acts(ctx: &mut StageCtx) -> Result<()> {
    let cfg = ctx.cfg;
    let model = load_gpt(&ctx.input(paths::GPT)?)?;
    let held = Transcripts::read(&ctx.input(paths::HELDOUT_GAMES)?)?;
    for layer in 1..=model.config().n_layers {
        let set = extract_activations(&model, &held.games, layer, cfg.states_per_game)?;
        set.vectors.check_finite("activations")?;
        write_activations(&set, &ctx.output(&paths::acts(layer))?)?;
        log(&format!("layer {layer}: {} rows", set.rows()));
    }
    Ok(())
}

fn layers(ctx: &StageCtx) -> std::ops::RangeInclusive<usize> {
    1..=ctx.cfg.n_layers
}

fn train_saes(ctx: &mut StageCtx) -> Result<()> {
    let cfg = ctx.cfg;
    let mut summary = String::from("layer,seed,init_heldout_mse,final_heldout_mse,heldout_active_fraction\n");
    for layer in layers(ctx) {
        let acts = read_activations(&ctx.input(&paths::acts(layer))?)?;
        let seeds: Vec<u64> = (0..cfg.sae_seeds).collect();
        let trained = seeds
            .par_iter()
            .map(|&s| train_sae(&acts, cfg.sae_latent(), cfg.sae_lambda, &cfg.sae_hyper(), s))
            .collect::<Result<Vec<_>>>()?;
        for (s, t) in seeds.iter().zip(trained) {
            t.model.save(&ctx.output(&paths::sae(layer, *s))?)?;
            let _ = writeln!(
                summary,
                "{layer},{s},{:.6e},{:.6e},{:.6}",
                t.init_heldout_mse, t.final_heldout_mse, t.heldout_active_fraction
            );
            log(&format!(
                "sae layer {layer} seed {s}: mse {:.4e} -> {:.4e}, active {:.4}",
                t.init_heldout_mse, t.final_heldout_mse, t.heldout_active_fraction
            ));
        }
    }
    ctx.write(paths::SAE_SUMMARY, &summary)
}

fn train_probes(ctx: &mut StageCtx) -> Result<()> {
    let cfg = ctx.cfg;
    let held = Transcripts::read(&ctx.input(paths::HELDOUT_GAMES)?)?;
    let mut points = Vec::new();
    for layer in layers(ctx) {
        let acts = read_activations(&ctx.input(&paths::acts(layer))?)?;
        for mode in TileMode::ALL {
            let labels = probe_labels(&acts, &held, mode)?;
            for &structure in &cfg.probe_structures.0 {
                let fit = |shuffle| {
                    train_probe(
                        &acts,
                        &labels,
                        mode,
                        structure,
                        &cfg.probe_hyper(),
                        cfg.probe_seed,
                        shuffle,
                    )
                };
                let t = fit(false)?;
                let control = if cfg.probe_control {
                    fit(true)?.val_accuracy
                } else {
                    f64::NAN
                };
                t.probe
                    .save(&ctx.output(&paths::probe(layer, mode, structure))?)?;
                log(&format!(
                    "probe layer {layer} {} {}: val {:.4} (chance {:.4}, control {:.4})",
                    mode.name(),
                    structure.name(),
                    t.val_accuracy,
                    t.val_chance,
                    control
                ));
                points.push(AccuracyPoint {
                    layer: layer as u16,
                    mode,
                    structure,
                    train_accuracy: t.train_accuracy,
                    val_accuracy: t.val_accuracy,
                    val_chance: t.val_chance,
                    control_accuracy: control,
                });
            }
        }
    }
    ctx.write(paths::PROBE_ACCURACY, &accuracy_csv(&points))
}

/// Encodes a layer's activations with one autoencoder.
fn sae_features(
    ctx: &mut StageCtx,
    acts: &ActivationSet,
    layer: usize,
    seed: u64,
) -> Result<crate::diffcompute::Tensor2D<f32>> {
    let model = SaeModel::load(&ctx.input(&paths::sae(layer, seed))?)?;
    feature_activations(&model, acts)
}

fn score_color(ctx: &mut StageCtx) -> Result<()> {
    let cfg = ctx.cfg;
    let held = Transcripts::read(&ctx.input(paths::HELDOUT_GAMES)?)?;
    for layer in layers(ctx) {
        let acts = read_activations(&ctx.input(&paths::acts(layer))?)?;
        let groups = TileMode::ALL
            .iter()
            .map(|&m| probe_labels(&acts, &held, m))
            .collect::<Result<Vec<_>>>()?;
        let labels = LabelGroups::new(groups)?;
        for seed in 0..cfg.sae_seeds {
            let feats = sae_features(ctx, &acts, layer, seed)?;
            let grid = score_features(&feats, &labels)?;
            let scores = best_mode_scores(&grid, layer as u16);
            ctx.write(&paths::color_scores(layer, seed), &score_table_csv(&scores))?;
        }
        log(&format!("colour scores for layer {layer}"));
    }
    Ok(())
}

fn score_stability(ctx: &mut StageCtx) -> Result<()> {
    let cfg = ctx.cfg;
    let held = Transcripts::read(&ctx.input(paths::HELDOUT_GAMES)?)?;
    for layer in layers(ctx) {
        let acts = read_activations(&ctx.input(&paths::acts(layer))?)?;
        let stable: Vec<u64> = held
            .aligned_boards(&acts.alignment)?
            .iter()
            .map(|b| stability_map_with(b, cfg.stability_adjacency).stable_mask)
            .collect();
        let labels = LabelGroups::new(vec![stable])?;
        for seed in 0..cfg.stability_seeds {
            let feats = sae_features(ctx, &acts, layer, seed)?;
            let grid = score_features(&feats, &labels)?;
            let scores = stability_scores(&grid, layer as u16);
            ctx.write(&paths::stability_scores(layer, seed), &score_table_csv(&scores))?;
        }
        log(&format!("stability scores for layer {layer}"));
    }
    Ok(())
}

/// The probe used for alignment: "my colour" (Own), per-tile if trained.
fn alignment_structure(cfg: &RunConfig) -> ProbeStructure {
    let s = &cfg.probe_structures.0;
    if s.contains(&ProbeStructure::PerTileIndependent) {
        ProbeStructure::PerTileIndependent
    } else {
        s[0]
    }
}

fn align_neurons(ctx: &mut StageCtx) -> Result<()> {
    let cfg = ctx.cfg;
    let model = load_gpt(&ctx.input(paths::GPT)?)?;
    let structure = alignment_structure(cfg);
    let baseline = random_alignment_baseline(
        cfg.d_model,
        cfg.align_threshold,
        cfg.align_baseline_samples,
        cfg.probe_seed,
    );
    let n_neurons = cfg.d_model * cfg.mlp_ratio;
    let mut summary = String::from(
        "layer,sublayer,threshold,total_count,mean_per_tile,skipped_neurons,baseline_fraction,baseline_per_tile\n",
    );
    for layer in layers(ctx) {
        let probe = ProbeModel::load(&ctx.input(&paths::probe(layer, TileMode::Own, structure))?)?;
        for sub in [MlpSublayer::Encoding, MlpSublayer::Projection] {
            let neurons = neuron_vectors(&model, layer, sub)?;
            let rep = neuron_probe_alignment(&neurons, &probe, sub, cfg.align_threshold)?;
            ctx.write(&paths::alignment(layer, sub), &rep.grid_csv())?;
            let total: u32 = rep.counts.iter().sum();
            let _ = writeln!(
                summary,
                "{layer},{},{},{total},{:.4},{},{:.6},{:.4}",
                sub.name(),
                cfg.align_threshold,
                f64::from(total) / 64.0,
                rep.skipped_neurons.len(),
                baseline,
                baseline * n_neurons as f64
            );
        }
    }
    ctx.write(paths::ALIGN_SUMMARY, &summary)
}

fn read_scores(ctx: &mut StageCtx, rel: &str) -> Result<Vec<FeatureScore>> {
    let p = ctx.input(rel)?;
    parse_score_table(&fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?)
}

fn report(ctx: &mut StageCtx) -> Result<()> {
    let cfg = ctx.cfg;
    let n_layers = cfg.n_layers;

    // Probe accuracy curves.
    let acc_path = ctx.input(paths::PROBE_ACCURACY)?;
    let points: Vec<AccuracyPoint> =
        parse_accuracy_csv(&fs::read_to_string(&acc_path).map_err(|e| Error::io(&acc_path, e))?)?;
    ctx.write("report/probe_accuracy.csv", &accuracy_csv(&points))?;
    ctx.write("report/probe_accuracy.svg", &accuracy_svg(&points))?;

    // Colour grids: one per layer, tallied across seeds.
    let tally = match cfg.color_tally {
        Tally::BestTile => TallyMode::BestTile,
        Tally::PerTile => TallyMode::PerTile {
            threshold: cfg.color_threshold,
        },
    };
    let mut top = String::from("layer,seed,rank,feature,tile,mode,auroc\n");
    let mut color_summary = String::from("layer,selected_total,nonzero_tiles,max_count\n");
    for layer in 1..=n_layers {
        let mut tables = Vec::new();
        for seed in 0..cfg.sae_seeds {
            tables.push((seed, read_scores(ctx, &paths::color_scores(layer, seed))?));
        }
        let mut per_seed = Vec::new();
        for (seed, scores) in &tables {
            let picked = top_color_features(scores, cfg.color_threshold, cfg.color_top_k);
            for (rank, f) in picked.iter().enumerate() {
                let best = scores
                    .iter()
                    .filter(|s| s.feature == *f)
                    .fold(None::<&FeatureScore>, |b, s| match b {
                        Some(b) if b.auroc >= s.auroc => Some(b),
                        _ => Some(s),
                    })
                    .expect("selected features have scores");
                let _ = writeln!(
                    top,
                    "{layer},{seed},{},{f},{},{},{:.6}",
                    rank + 1,
                    best.tile,
                    best.mode.map_or("stable", TileMode::name),
                    best.auroc
                );
            }
            per_seed.push((*seed, picked, &scores[..]));
        }
        let grid = aggregate_seed_frequency(&per_seed, layer as u16, tally)?;
        let stem = ctx.output(&format!("report/color_grid_layer{layer}.csv"))?;
        ctx.output(&format!("report/color_grid_layer{layer}.svg"))?;
        emit_heatmap(
            &grid,
            &stem,
            &format!("Layer {layer}: colour features across {} seeds", cfg.sae_seeds),
        )?;
        let selected: usize = per_seed.iter().map(|(_, p, _)| p.len()).sum();
        let _ = writeln!(
            color_summary,
            "{layer},{selected},{},{}",
            grid.nonzero_tiles(),
            grid.max()
        );
    }
    ctx.write("report/color_top_features.csv", &top)?;
    ctx.write("report/color_summary.csv", &color_summary)?;

    // Stability grids and appendix-style tables.
    let mut per_layer = String::from("seed,layer,qualifying_pairs\n");
    for seed in 0..cfg.stability_seeds {
        let mut all = Vec::new();
        for layer in 1..=n_layers {
            let scores = read_scores(ctx, &paths::stability_scores(layer, seed))?;
            let grid = stability_tile_frequency(&scores, layer as u16, cfg.stability_threshold);
            let stem = ctx.output(&format!("report/stability_grid_layer{layer}_seed{seed}.csv"))?;
            ctx.output(&format!("report/stability_grid_layer{layer}_seed{seed}.svg"))?;
            emit_heatmap(
                &grid,
                &stem,
                &format!("Layer {layer}: stability pairs, seed {seed}"),
            )?;
            all.extend(scores);
        }
        let rows = stability_feature_frequency(&all, n_layers, cfg.stability_threshold)?;
        ctx.write(
            &format!("report/stability_table_seed{seed}.csv"),
            &feature_frequency_csv(&rows, n_layers),
        )?;
        for (l, n) in pairs_per_layer(&rows, n_layers).iter().enumerate() {
            let _ = writeln!(per_layer, "{seed},{},{n}", l + 1);
        }
    }
    ctx.write("report/stability_layers.csv", &per_layer)?;

    // Alignment grids.
    for layer in 1..=n_layers {
        for sub in [MlpSublayer::Encoding, MlpSublayer::Projection] {
            let p = ctx.input(&paths::alignment(layer, sub))?;
            let counts = analysis::parse_grid_csv(&fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?)?;
            let mut grid =
                analysis::TileFrequencyGrid::new(layer as u16, "alignment", cfg.align_threshold, vec![]);
            grid.counts = counts;
            let stem = ctx.output(&format!("report/alignment_layer{layer}_{}.csv", sub.name()))?;
            ctx.output(&format!("report/alignment_layer{layer}_{}.svg", sub.name()))?;
            emit_heatmap(
                &grid,
                &stem,
                &format!("Layer {layer}: {} neurons vs own probe", sub.name()),
            )?;
        }
    }
    Ok(())
}
