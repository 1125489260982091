// SPDX-License-Identifier: MIT OR Apache-2.0

//! Linear board-state probes and their alignment with MLP neurons.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{ActivationSet, Transcripts};
use crate::diffcompute::ops::{matmul, matmul_backward, softmax_slice};
use crate::diffcompute::{adam_step, AdamConfig, Checkpoint, ParamStore, Scalar, Section, Tensor2D};
use crate::error::{Error, Result};
use crate::gpt::Gpt;
use crate::othello::{tile_labels, TileMode};
use crate::rng;

pub const N_TILES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ProbeStructure {
    /// One softmax over the 64 locations.
    MulticlassLocation,
    /// 64 independent logistic outputs.
    #[default]
    PerTileIndependent,
}

impl ProbeStructure {
    pub fn name(self) -> &'static str {
        match self {
            ProbeStructure::MulticlassLocation => "multiclass",
            ProbeStructure::PerTileIndependent => "per-tile",
        }
    }

    pub fn parse(s: &str) -> Option<ProbeStructure> {
        match s {
            "multiclass" => Some(ProbeStructure::MulticlassLocation),
            "per-tile" => Some(ProbeStructure::PerTileIndependent),
            _ => None,
        }
    }
}

/// A label for one hidden state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeTarget {
    /// A single location.
    Class(u8),
    /// A set of locations as a 64-bit mask. For the multiclass structure
    /// the loss is the mean cross-entropy over the set.
    Tiles(u64),
}

impl ProbeTarget {
    pub fn mask(self) -> Result<u64> {
        match self {
            ProbeTarget::Class(c) if usize::from(c) < N_TILES => Ok(1 << c),
            ProbeTarget::Class(c) => Err(Error::InvalidLabel(format!("class {c} >= {N_TILES}"))),
            ProbeTarget::Tiles(m) => Ok(m),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean probe loss over rows of `x` (one mask per row), evaluated in f64.
pub fn probe_loss_batch<T: Scalar>(
    w: &Tensor2D<T>,
    x: &Tensor2D<T>,
    labels: &[u64],
    structure: ProbeStructure,
) -> Result<f64> {
    loss_impl(w, x, labels, structure, None)
}

/// [`probe_loss_batch`] with its gradient accumulated into `dw`.
pub fn probe_loss_and_grad<T: Scalar>(
    w: &Tensor2D<T>,
    x: &Tensor2D<T>,
    labels: &[u64],
    structure: ProbeStructure,
    dw: &mut Tensor2D<T>,
) -> Result<f64> {
    loss_impl(w, x, labels, structure, Some(dw))
}

fn loss_impl<T: Scalar>(
    w: &Tensor2D<T>,
    x: &Tensor2D<T>,
    labels: &[u64],
    structure: ProbeStructure,
    dw: Option<&mut Tensor2D<T>>,
) -> Result<f64> {
    if w.cols() != N_TILES || x.cols() != w.rows() {
        return Err(Error::shape(format!(
            "probe {:?} applied to rows of width {}",
            w.shape(),
            x.cols()
        )));
    }
    if labels.len() != x.rows() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: labels.len(),
        });
    }
    if x.rows() == 0 {
        return Err(Error::AllMasked);
    }
    let logits = matmul(x, w)?;
    let n = x.rows() as f64;
    let mut total = 0.0;
    let mut dlogits = Tensor2D::<T>::zeros(x.rows(), N_TILES);
    match structure {
        ProbeStructure::PerTileIndependent => {
            for r in 0..x.rows() {
                let row = logits.row(r);
                let d = dlogits.row_mut(r);
                for t in 0..N_TILES {
                    let z = row[t].to_f64();
                    let y = (labels[r] >> t & 1) as f64;
                    total += softplus(z) - y * z;
                    d[t] = T::from_f64((sigmoid(z) - y) / (n * N_TILES as f64));
                }
            }
            total /= n * N_TILES as f64;
        }
        ProbeStructure::MulticlassLocation => {
            let mut p = vec![T::ZERO; N_TILES];
            for r in 0..x.rows() {
                let mask = labels[r];
                if mask == 0 {
                    return Err(Error::InvalidLabel(format!("row {r} has no target location")));
                }
                let k = f64::from(mask.count_ones());
                let row = logits.row(r);
                let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.to_f64()));
                let lse = max + row.iter().map(|v| (v.to_f64() - max).exp()).sum::<f64>().ln();
                softmax_slice(row, &mut p);
                let d = dlogits.row_mut(r);
                for t in 0..N_TILES {
                    let y = (mask >> t & 1) as f64 / k;
                    total += y * (lse - row[t].to_f64());
                    d[t] = T::from_f64((p[t].to_f64() - y) / n);
                }
            }
            total /= n;
        }
    }
    if let Some(dw) = dw {
        let mut dwt = Tensor2D::zeros(w.rows(), N_TILES);
        matmul_backward(x, w, &dlogits, &mut dwt)?;
        dw.add_assign(&dwt)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    /// `d x 64`; column `t` is the direction for tile `t`.
    pub w: Tensor2D<f32>,
    pub mode: TileMode,
    pub layer: u16,
    pub structure: ProbeStructure,
}

impl ProbeModel {
    pub fn zeros(d: usize, mode: TileMode, layer: u16, structure: ProbeStructure) -> ProbeModel {
        ProbeModel {
            w: Tensor2D::zeros(d, N_TILES),
            mode,
            layer,
            structure,
        }
    }

    fn logits(&self, h: &[f32]) -> Result<Vec<f64>> {
        if h.len() != self.w.rows() {
            return Err(Error::shape(format!(
                "hidden state of length {} for a probe of width {}",
                h.len(),
                self.w.rows()
            )));
        }
        let mut z = vec![0f64; N_TILES];
        for (i, &hv) in h.iter().enumerate() {
            for (zt, &wv) in z.iter_mut().zip(self.w.row(i)) {
                *zt += f64::from(hv) * f64::from(wv);
            }
        }
        Ok(z)
    }

    /// Softmax over locations or per-tile probabilities.
    pub fn forward(&self, h: &[f32]) -> Result<Vec<f64>> {
        let z = self.logits(h)?;
        Ok(match self.structure {
            ProbeStructure::PerTileIndependent => z.iter().map(|&v| sigmoid(v)).collect(),
            ProbeStructure::MulticlassLocation => {
                let mut p = vec![0f64; N_TILES];
                softmax_slice(&z, &mut p);
                p
            }
        })
    }

    pub fn loss(&self, h: &[f32], target: ProbeTarget) -> Result<f64> {
        let x = Tensor2D::from_vec(1, h.len(), h.to_vec())?;
        probe_loss_batch(&self.w, &x, &[target.mask()?], self.structure)
    }

    /// Argmax accuracy (multiclass: the argmax lies in the label set) or
    /// mean per-tile accuracy at probability 0.5.
    pub fn accuracy(&self, x: &Tensor2D<f32>, labels: &[u64]) -> Result<f64> {
        if labels.len() != x.rows() {
            return Err(Error::LengthMismatch {
                left: x.rows(),
                right: labels.len(),
            });
        }
        if x.rows() == 0 {
            return Ok(0.0);
        }
        let logits = matmul(x, &self.w)?;
        let mut correct = 0usize;
        for (r, &mask) in labels.iter().enumerate() {
            let row = logits.row(r);
            match self.structure {
                ProbeStructure::PerTileIndependent => {
                    for (t, &z) in row.iter().enumerate() {
                        let predicted = z > 0.0;
                        correct += usize::from(predicted == (mask >> t & 1 == 1));
                    }
                }
                ProbeStructure::MulticlassLocation => {
                    let mut best = 0;
                    for t in 1..N_TILES {
                        if row[t] > row[best] {
                            best = t;
                        }
                    }
                    correct += usize::from(mask >> best & 1 == 1);
                }
            }
        }
        let per_row = match self.structure {
            ProbeStructure::PerTileIndependent => N_TILES,
            ProbeStructure::MulticlassLocation => 1,
        };
        Ok(correct as f64 / (x.rows() * per_row) as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.push(Section::tensor("W", &self.w));
        let structure = match self.structure {
            ProbeStructure::MulticlassLocation => 0,
            ProbeStructure::PerTileIndependent => 1,
        };
        ck.push(Section::words(
            "meta",
            &[u32::from(self.layer), self.mode.index() as u32, structure],
        ));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<ProbeModel> {
        let w = ck.section("W")?.to_tensor()?;
        if w.cols() != N_TILES {
            return Err(Error::Format(format!("probe has {} columns", w.cols())));
        }
        let meta = ck.section("meta")?.as_words();
        let bad = || Error::Format("probe metadata".into());
        if meta.len() != 3 {
            return Err(bad());
        }
        Ok(ProbeModel {
            w,
            layer: u16::try_from(meta[0]).map_err(|_| bad())?,
            mode: *TileMode::ALL.get(meta[1] as usize).ok_or_else(bad)?,
            structure: match meta[2] {
                0 => ProbeStructure::MulticlassLocation,
                1 => ProbeStructure::PerTileIndependent,
                _ => return Err(bad()),
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().write(path)
    }

    pub fn load(path: &Path) -> Result<ProbeModel> {
        ProbeModel::from_checkpoint(&Checkpoint::read(path)?)
    }
}

/// Tile masks for every activation row, relative to the player to move.
pub fn probe_labels(acts: &ActivationSet, transcripts: &Transcripts, mode: TileMode) -> Result<Vec<u64>> {
    Ok(transcripts
        .aligned_boards(&acts.alignment)?
        .iter()
        .map(|b| tile_labels(b, b.to_move(), mode))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeHyper {
    pub lr: f64,
    pub batch_size: usize,
    pub steps: u64,
    /// Fraction of games used for training; the rest validate.
    pub train_fraction: f64,
}

impl Default for ProbeHyper {
    fn default() -> Self {
        ProbeHyper {
            lr: 1e-2,
            batch_size: 1024,
            steps: 2000,
            train_fraction: 0.8,
        }
    }
}

/// Disjoint train and validation games: the distinct games are shuffled
/// with `seed` and the first `train_fraction` of them train.
pub fn split_games(acts: &ActivationSet, train_fraction: f64, seed: u64) -> (Vec<u32>, Vec<u32>) {
    let mut games: Vec<u32> = acts.alignment.iter().map(|r| r.game).collect();
    games.sort_unstable();
    games.dedup();
    games.shuffle(&mut rng::derived(seed, "probe-split"));
    let n_train = ((games.len() as f64) * train_fraction).round() as usize;
    let mut val = games.split_off(n_train.min(games.len()));
    games.sort_unstable();
    val.sort_unstable();
    (games, val)
}

#[derive(Debug, Clone)]
pub struct ProbeTraining {
    pub probe: ProbeModel,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    /// Majority-class accuracy on the validation rows.
    pub val_chance: f64,
}

/// Majority-class accuracy of the labels under `structure`.
pub fn chance_accuracy(labels: &[u64], structure: ProbeStructure) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let mut counts = [0usize; N_TILES];
    for &m in labels {
        for (t, c) in counts.iter_mut().enumerate() {
            *c += (m >> t & 1) as usize;
        }
    }
    let n = labels.len();
    match structure {
        ProbeStructure::PerTileIndependent => {
            counts.iter().map(|&c| c.max(n - c)).sum::<usize>() as f64 / (n * N_TILES) as f64
        }
        ProbeStructure::MulticlassLocation => *counts.iter().max().expect("64 entries") as f64 / n as f64,
    }
}

/// Trains a probe on `labels` aligned to `acts`. With `shuffle_labels`
/// the labels are permuted across rows first, giving the control probe.
#[allow(clippy::too_many_arguments)]
pub fn train_probe(
    acts: &ActivationSet,
    labels: &[u64],
    mode: TileMode,
    structure: ProbeStructure,
    hyper: &ProbeHyper,
    seed: u64,
    shuffle_labels: bool,
) -> Result<ProbeTraining> {
    if labels.len() != acts.rows() {
        return Err(Error::LengthMismatch {
            left: acts.rows(),
            right: labels.len(),
        });
    }
    let mut labels = labels.to_vec();
    if shuffle_labels {
        labels.shuffle(&mut rng::derived(seed, "probe-control"));
    }
    let (train_games, _) = split_games(acts, hyper.train_fraction, seed);
    let is_train = |g: u32| train_games.binary_search(&g).is_ok();
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for (i, r) in acts.alignment.iter().enumerate() {
        if structure == ProbeStructure::MulticlassLocation && labels[i] == 0 {
            continue;
        }
        if is_train(r.game) {
            train_idx.push(i);
        } else {
            val_idx.push(i);
        }
    }
    if train_idx.is_empty() || hyper.batch_size == 0 {
        return Err(Error::Config("probe training set is empty".into()));
    }
    let x_train = acts.vectors.select_rows(&train_idx);
    let y_train: Vec<u64> = train_idx.iter().map(|&i| labels[i]).collect();
    let x_val = acts.vectors.select_rows(&val_idx);
    let y_val: Vec<u64> = val_idx.iter().map(|&i| labels[i]).collect();

    let mut store: ParamStore<f32> = ParamStore::new();
    let id = store.insert("W", Tensor2D::zeros(acts.cols(), N_TILES))?;
    let cfg = AdamConfig {
        lr: hyper.lr,
        ..AdamConfig::default()
    };
    let mut order: Vec<usize> = (0..train_idx.len()).collect();
    let mut r = rng::derived(seed, "probe-batches");
    let mut cursor = order.len();
    for step in 1..=hyper.steps {
        let mut idx = Vec::with_capacity(hyper.batch_size);
        while idx.len() < hyper.batch_size.min(order.len()) {
            if cursor == order.len() {
                order.shuffle(&mut r);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let xb = x_train.select_rows(&idx);
        let yb: Vec<u64> = idx.iter().map(|&i| y_train[i]).collect();
        let (w, dw) = store.value_and_grad_mut(id);
        let loss = probe_loss_and_grad(w, &xb, &yb, structure, dw)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteValue(format!("probe loss at step {step}")));
        }
        adam_step(&mut store, &cfg, step)?;
    }
    let probe = ProbeModel {
        w: store.value(id).clone(),
        mode,
        layer: acts.layer,
        structure,
    };
    Ok(ProbeTraining {
        train_accuracy: probe.accuracy(&x_train, &y_train)?,
        val_accuracy: probe.accuracy(&x_val, &y_val)?,
        val_chance: chance_accuracy(&y_val, structure),
        probe,
    })
}

pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (mut ab, mut aa, mut bb) = (0f64, 0f64, 0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MlpSublayer {
    /// The d -> 4d weight; a neuron's input direction.
    Encoding,
    /// The 4d -> d weight; a neuron's output direction.
    Projection,
}

impl MlpSublayer {
    pub fn name(self) -> &'static str {
        match self {
            MlpSublayer::Encoding => "encoding",
            MlpSublayer::Projection => "projection",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    /// Row-major 8x8 counts of neurons above the threshold per tile.
    pub counts: [u32; N_TILES],
    pub threshold: f64,
    pub layer: u16,
    pub sublayer: MlpSublayer,
    /// Neurons with an all-zero direction, left out of the counts.
    pub skipped_neurons: Vec<usize>,
    /// Tiles whose probe column is zero; their count stays 0.
    pub skipped_tiles: Vec<usize>,
}

impl AlignmentReport {
    pub fn grid_csv(&self) -> String {
        grid_csv(&self.counts)
    }
}

/// Row-major 8x8 grid as eight comma-separated lines.
pub fn grid_csv<T: std::fmt::Display>(cells: &[T]) -> String {
    let mut s = String::new();
    for row in cells.chunks(8) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", line.join(","));
    }
    s
}

/// Neuron directions of one block's MLP in residual space.
pub fn neuron_vectors(model: &Gpt<f32>, layer: usize, sublayer: MlpSublayer) -> Result<Vec<Vec<f32>>> {
    let n_layers = model.config().n_layers;
    if layer == 0 || layer > n_layers {
        return Err(Error::LayerOutOfRange { layer, n_layers });
    }
    let p = model.params();
    Ok(match sublayer {
        MlpSublayer::Encoding => {
            let w = p.get(&format!("blocks.{}.mlp.w_in", layer - 1))?;
            (0..w.cols())
                .map(|j| (0..w.rows()).map(|i| w.get(i, j)).collect())
                .collect()
        }
        MlpSublayer::Projection => {
            let w = p.get(&format!("blocks.{}.mlp.w_out", layer - 1))?;
            (0..w.rows()).map(|j| w.row(j).to_vec()).collect()
        }
    })
}

/// Counts, per tile, the neurons whose |cosine| with the probe column
/// exceeds `threshold`.
pub fn neuron_probe_alignment(
    neurons: &[Vec<f32>],
    probe: &ProbeModel,
    sublayer: MlpSublayer,
    threshold: f64,
) -> Result<AlignmentReport> {
    let columns: Vec<Vec<f32>> = (0..N_TILES)
        .map(|t| (0..probe.w.rows()).map(|i| probe.w.get(i, t)).collect())
        .collect();
    let mut counts = [0u32; N_TILES];
    let mut skipped_neurons = Vec::new();
    let mut skipped_tiles: Vec<usize> = (0..N_TILES)
        .filter(|&t| columns[t].iter().all(|&v| v == 0.0))
        .collect();
    for (j, n) in neurons.iter().enumerate() {
        if n.iter().all(|&v| v == 0.0) {
            skipped_neurons.push(j);
            continue;
        }
        for (t, col) in columns.iter().enumerate() {
            if skipped_tiles.binary_search(&t).is_ok() {
                continue;
            }
            if cosine_similarity(n, col)?.abs() > threshold {
                counts[t] += 1;
            }
        }
    }
    skipped_tiles.sort_unstable();
    Ok(AlignmentReport {
        counts,
        threshold,
        layer: probe.layer,
        sublayer,
        skipped_neurons,
        skipped_tiles,
    })
}

/// Monte Carlo estimate of `P(|cos(u, v)| > threshold)` for independent
/// uniformly random directions in `d` dimensions.
pub fn random_alignment_baseline(d: usize, threshold: f64, samples: usize, seed: u64) -> f64 {
    let mut r = rng::derived(seed, "alignment-baseline");
    let mut hits = 0usize;
    let mut u = vec![0f32; d];
    let mut v = vec![0f32; d];
    for _ in 0..samples {
        for x in u.iter_mut().chain(v.iter_mut()) {
            let s: f64 = StandardNormal.sample(&mut r);
            *x = s as f32;
        }
        if let Ok(c) = cosine_similarity(&u, &v) {
            hits += usize::from(c.abs() > threshold);
        }
    }
    hits as f64 / samples.max(1) as f64
}
