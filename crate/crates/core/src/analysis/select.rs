// SPDX-License-Identifier: MIT OR Apache-2.0

//! Threshold and top-k selection, cross-seed tallies and stability
//! frequency tables built from score rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::scoring::FeatureScore;
use crate::error::{Error, Result};

/// Default AUROC threshold for colour feature selection.
pub const COLOR_THRESHOLD: f64 = 0.7;
/// Default number of colour features kept per seed.
pub const COLOR_TOP_K: usize = 50;
/// Default AUROC threshold for stability counting.
pub const STABILITY_THRESHOLD: f64 = 0.8;

/// 8x8 count grid with a note of where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileFrequencyGrid {
    pub counts: [u32; 64],
    pub layer: u16,
    pub metric: String,
    /// Threshold rendered as text so the grid stays `Eq`.
    pub threshold: String,
    pub seeds: Vec<u64>,
}

impl TileFrequencyGrid {
    pub fn new(layer: u16, metric: &str, threshold: f64, seeds: Vec<u64>) -> Self {
        TileFrequencyGrid {
            counts: [0; 64],
            layer,
            metric: metric.to_string(),
            threshold: format!("{threshold}"),
            seeds,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn max(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.counts[row * 8 + col]
    }

    pub fn nonzero_tiles(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

/// How a selected feature contributes to a seed tally.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum TallyMode {
    /// Once, at its highest-AUROC tile (lowest index on ties).
    #[default]
    BestTile,
    /// Once per tile whose AUROC exceeds the threshold.
    PerTile { threshold: f64 },
}

fn best_per_feature(scores: &[FeatureScore]) -> BTreeMap<u32, &FeatureScore> {
    let mut best: BTreeMap<u32, &FeatureScore> = BTreeMap::new();
    for s in scores {
        if s.auroc.is_nan() {
            continue;
        }
        best.entry(s.feature)
            .and_modify(|b| {
                if s.auroc > b.auroc || (s.auroc == b.auroc && s.tile < b.tile) {
                    *b = s;
                }
            })
            .or_insert(s);
    }
    best
}

/// Up to `top_k` features whose best AUROC exceeds `threshold`, ordered
/// by best AUROC descending, then by feature index.
pub fn top_color_features(scores: &[FeatureScore], threshold: f64, top_k: usize) -> Vec<u32> {
    let mut picked: Vec<(u32, f64)> = best_per_feature(scores)
        .into_iter()
        .filter(|(_, s)| s.auroc > threshold)
        .map(|(f, s)| (f, s.auroc))
        .collect();
    picked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    picked.truncate(top_k);
    picked.into_iter().map(|(f, _)| f).collect()
}

/// Sums per-seed tile tallies. Each entry pairs a seed's selected features
/// with the score rows they were selected from.
pub fn aggregate_seed_frequency(
    per_seed: &[(u64, Vec<u32>, &[FeatureScore])],
    layer: u16,
    mode: TallyMode,
) -> Result<TileFrequencyGrid> {
    if per_seed.is_empty() {
        return Err(Error::Config("aggregation needs at least one seed".into()));
    }
    let threshold = match mode {
        TallyMode::BestTile => f64::NAN,
        TallyMode::PerTile { threshold } => threshold,
    };
    let mut grid = TileFrequencyGrid::new(
        layer,
        "color-auroc",
        threshold,
        per_seed.iter().map(|(s, _, _)| *s).collect(),
    );
    for (_, features, scores) in per_seed {
        match mode {
            TallyMode::BestTile => {
                let best = best_per_feature(scores);
                for f in features {
                    if let Some(s) = best.get(f) {
                        grid.counts[usize::from(s.tile)] += 1;
                    }
                }
            }
            TallyMode::PerTile { threshold } => {
                let mut chosen = features.clone();
                chosen.sort_unstable();
                for s in scores.iter() {
                    if s.auroc > threshold && chosen.binary_search(&s.feature).is_ok() {
                        grid.counts[usize::from(s.tile)] += 1;
                    }
                }
            }
        }
    }
    Ok(grid)
}

/// Number of (feature, tile) pairs per tile with AUROC above `threshold`,
/// counting only rows of `layer`.
pub fn stability_tile_frequency(scores: &[FeatureScore], layer: u16, threshold: f64) -> TileFrequencyGrid {
    let mut grid = TileFrequencyGrid::new(layer, "stability-auroc", threshold, Vec::new());
    for s in scores {
        if s.layer == layer && s.auroc > threshold {
            grid.counts[usize::from(s.tile)] += 1;
        }
    }
    grid
}

/// One row of the per-feature, per-layer stability table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureFrequencyRow {
    pub feature: u32,
    pub per_layer: Vec<u32>,
    pub total: u32,
}

/// Qualifying tile counts per feature and layer for layers `1..=n_layers`.
/// Features that never qualify are dropped. Rows run by total descending,
/// then feature index.
pub fn stability_feature_frequency(
    scores: &[FeatureScore],
    n_layers: usize,
    threshold: f64,
) -> Result<Vec<FeatureFrequencyRow>> {
    let mut table: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for s in scores {
        let l = usize::from(s.layer);
        if l == 0 || l > n_layers {
            return Err(Error::LayerOutOfRange { layer: l, n_layers });
        }
        if s.auroc > threshold {
            table.entry(s.feature).or_insert_with(|| vec![0; n_layers])[l - 1] += 1;
        }
    }
    let mut rows: Vec<FeatureFrequencyRow> = table
        .into_iter()
        .map(|(feature, per_layer)| FeatureFrequencyRow {
            feature,
            total: per_layer.iter().sum(),
            per_layer,
        })
        .collect();
    rows.sort_by(|a, b| b.total.cmp(&a.total).then(a.feature.cmp(&b.feature)));
    Ok(rows)
}

/// `Feature,Layer 1,..,Layer N,Total Count` table.
pub fn feature_frequency_csv(rows: &[FeatureFrequencyRow], n_layers: usize) -> String {
    let mut s = String::from("Feature");
    for l in 1..=n_layers {
        let _ = write!(s, ",Layer {l}");
    }
    s.push_str(",Total Count\n");
    for r in rows {
        let _ = write!(s, "{}", r.feature);
        for c in &r.per_layer {
            let _ = write!(s, ",{c}");
        }
        let _ = writeln!(s, ",{}", r.total);
    }
    s
}

/// Qualifying pairs summed per layer (index 0 is layer 1).
pub fn pairs_per_layer(rows: &[FeatureFrequencyRow], n_layers: usize) -> Vec<u64> {
    let mut sums = vec![0u64; n_layers];
    for r in rows {
        for (s, &c) in sums.iter_mut().zip(&r.per_layer) {
            *s += u64::from(c);
        }
    }
    sums
}
