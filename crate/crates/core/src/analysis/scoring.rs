// SPDX-License-Identifier: MIT OR Apache-2.0

//! Scores every (feature, label column) pair of an activation matrix at
//! once. Rank sums and confusion counts are products of a rank (or
//! activity) matrix with a 0/1 label matrix, so they run as f64 GEMMs;
//! every entry is a sum of half-integers well below 2^53, hence exact.

use std::fmt::Write as _;

use super::metrics::{auroc_from_rank_sum, average_ranks, Confusion};
use crate::diffcompute::ops::{gemm_into, Trans};
use crate::diffcompute::Tensor2D;
use crate::error::{Error, Result};
use crate::othello::TileMode;

const FEATURE_BLOCK: usize = 32;
const ROW_CHUNK: usize = 8192;

/// Label columns built from per-row 64-bit tile masks: group `g`
/// contributes columns `64 g .. 64 g + 63`, one per tile.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGroups {
    pub groups: Vec<Vec<u64>>,
}

impl LabelGroups {
    pub fn new(groups: Vec<Vec<u64>>) -> Result<LabelGroups> {
        if let Some(first) = groups.first() {
            for g in &groups {
                if g.len() != first.len() {
                    return Err(Error::LengthMismatch {
                        left: first.len(),
                        right: g.len(),
                    });
                }
            }
        }
        Ok(LabelGroups { groups })
    }

    pub fn rows(&self) -> usize {
        self.groups.first().map_or(0, Vec::len)
    }

    pub fn columns(&self) -> usize {
        self.groups.len() * 64
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.groups[col / 64][row] >> (col % 64) & 1 == 1
    }

    fn fill_chunk(&self, start: usize, end: usize, out: &mut Tensor2D<f64>) {
        out.fill(0.0);
        for (g, masks) in self.groups.iter().enumerate() {
            for (r, &m) in masks[start..end].iter().enumerate() {
                let row = out.row_mut(r);
                let mut bits = m;
                while bits != 0 {
                    let t = bits.trailing_zeros() as usize;
                    row[g * 64 + t] = 1.0;
                    bits &= bits - 1;
                }
            }
        }
    }
}

/// Scores for an `n_features x n_columns` grid, stored feature-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrid {
    pub n_features: usize,
    pub n_columns: usize,
    /// Rank AUROC; `NaN` where a column has a single class.
    pub auroc: Vec<f64>,
    pub confusion: Vec<Confusion>,
}

impl ScoreGrid {
    fn idx(&self, feature: usize, column: usize) -> usize {
        feature * self.n_columns + column
    }

    pub fn auroc(&self, feature: usize, column: usize) -> Option<f64> {
        let a = self.auroc[self.idx(feature, column)];
        (!a.is_nan()).then_some(a)
    }

    pub fn confusion(&self, feature: usize, column: usize) -> Confusion {
        self.confusion[self.idx(feature, column)]
    }
}

/// Scores every feature column of `features` against every label column.
pub fn score_features(features: &Tensor2D<f32>, labels: &LabelGroups) -> Result<ScoreGrid> {
    let (n, nf) = features.shape();
    if labels.rows() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: labels.rows(),
        });
    }
    let nc = labels.columns();
    let mut n_pos = vec![0u64; nc];
    for (g, masks) in labels.groups.iter().enumerate() {
        for &m in masks {
            let mut bits = m;
            while bits != 0 {
                n_pos[g * 64 + bits.trailing_zeros() as usize] += 1;
                bits &= bits - 1;
            }
        }
    }

    let mut auroc = vec![f64::NAN; nf * nc];
    let mut confusion = vec![Confusion::default(); nf * nc];
    let mut y = Tensor2D::<f64>::zeros(ROW_CHUNK.min(n.max(1)), nc);
    let mut column = vec![0f32; n];
    for f0 in (0..nf).step_by(FEATURE_BLOCK) {
        let fb = FEATURE_BLOCK.min(nf - f0);
        let mut ranks = Tensor2D::<f64>::zeros(n, fb);
        let mut active = Tensor2D::<f64>::zeros(n, fb);
        let mut n_active = vec![0u64; fb];
        for j in 0..fb {
            for (r, c) in column.iter_mut().enumerate() {
                *c = features.get(r, f0 + j);
            }
            let rk = average_ranks(&column)?;
            for r in 0..n {
                ranks.set(r, j, rk[r]);
                if column[r] > 0.0 {
                    active.set(r, j, 1.0);
                    n_active[j] += 1;
                }
            }
        }
        let mut rank_sum = Tensor2D::<f64>::zeros(fb, nc);
        let mut tp = Tensor2D::<f64>::zeros(fb, nc);
        for start in (0..n).step_by(ROW_CHUNK) {
            let end = (start + ROW_CHUNK).min(n);
            let rows: Vec<usize> = (start..end).collect();
            let yc = if end - start == y.rows() {
                labels.fill_chunk(start, end, &mut y);
                &y
            } else {
                y = Tensor2D::zeros(end - start, nc);
                labels.fill_chunk(start, end, &mut y);
                &y
            };
            let rc = ranks.select_rows(&rows);
            let ac = active.select_rows(&rows);
            gemm_into(&rc, Trans::Yes, yc, Trans::No, 1.0, 1.0, &mut rank_sum)?;
            gemm_into(&ac, Trans::Yes, yc, Trans::No, 1.0, 1.0, &mut tp)?;
        }
        for j in 0..fb {
            for c in 0..nc {
                let k = (f0 + j) * nc + c;
                let pos = n_pos[c];
                let neg = n as u64 - pos;
                if let Some(a) = auroc_from_rank_sum(rank_sum.get(j, c), pos, neg) {
                    auroc[k] = a;
                }
                let t = tp.get(j, c) as u64;
                let fp = n_active[j] - t;
                let fn_ = pos - t;
                confusion[k] = Confusion {
                    tp: t as u32,
                    fp: fp as u32,
                    fn_: fn_ as u32,
                    tn: (n as u64 - t - fp - fn_) as u32,
                };
            }
        }
    }
    Ok(ScoreGrid {
        n_features: nf,
        n_columns: nc,
        auroc,
        confusion,
    })
}

/// One row of a score table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureScore {
    pub layer: u16,
    pub feature: u32,
    pub tile: u8,
    /// `None` for single-label analyses such as stability.
    pub mode: Option<TileMode>,
    pub confusion: Confusion,
    pub f1: f64,
    pub auroc: f64,
}

impl FeatureScore {
    pub fn balanced_auroc(&self) -> f64 {
        self.confusion.balanced_auroc().unwrap_or(f64::NAN)
    }
}

pub const SCORE_HEADER: &str = "layer,feature,tile,mode,tp,fp,tn,fn,f1,auroc,auroc_binary";

pub fn score_table_csv(scores: &[FeatureScore]) -> String {
    let mut s = String::with_capacity(64 * (scores.len() + 1));
    s.push_str(SCORE_HEADER);
    s.push('\n');
    for r in scores {
        let c = r.confusion;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6}",
            r.layer,
            r.feature,
            r.tile,
            r.mode.map_or("stable", TileMode::name),
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            r.f1,
            r.auroc,
            r.balanced_auroc()
        );
    }
    s
}

/// Reads a table written by [`score_table_csv`].
pub fn parse_score_table(text: &str) -> Result<Vec<FeatureScore>> {
    let mut lines = text.lines();
    if lines.next() != Some(SCORE_HEADER) {
        return Err(Error::Format("score table header mismatch".into()));
    }
    let bad = |l: &str| Error::Format(format!("bad score row {l:?}"));
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 11 {
                return Err(bad(l));
            }
            let int = |i: usize| f[i].parse::<u32>().map_err(|_| bad(l));
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(l));
            let mode = match f[3] {
                "stable" => None,
                m => Some(TileMode::parse(m).ok_or_else(|| bad(l))?),
            };
            Ok(FeatureScore {
                layer: f[0].parse().map_err(|_| bad(l))?,
                feature: int(1)?,
                tile: f[2].parse().map_err(|_| bad(l))?,
                mode,
                confusion: Confusion {
                    tp: int(4)?,
                    fp: int(5)?,
                    tn: int(6)?,
                    fn_: int(7)?,
                },
                f1: num(8)?,
                auroc: num(9)?,
            })
        })
        .collect()
}

/// Colour scores: for each (feature, tile), the mode with the highest
/// AUROC (earliest mode on ties). Grids come from [`score_features`] over
/// the three mode groups in [`TileMode::ALL`] order. Pairs with no
/// scorable mode are omitted.
pub fn best_mode_scores(grid: &ScoreGrid, layer: u16) -> Vec<FeatureScore> {
    assert_eq!(
        grid.n_columns,
        64 * TileMode::ALL.len(),
        "three mode groups expected"
    );
    let mut out = Vec::with_capacity(grid.n_features * 64);
    for f in 0..grid.n_features {
        for tile in 0..64 {
            let mut best: Option<(usize, f64)> = None;
            for (m, _) in TileMode::ALL.iter().enumerate() {
                if let Some(a) = grid.auroc(f, m * 64 + tile) {
                    if best.is_none_or(|(_, b)| a > b) {
                        best = Some((m, a));
                    }
                }
            }
            if let Some((m, a)) = best {
                let c = grid.confusion(f, m * 64 + tile);
                out.push(FeatureScore {
                    layer,
                    feature: f as u32,
                    tile: tile as u8,
                    mode: Some(TileMode::ALL[m]),
                    confusion: c,
                    f1: c.f1(),
                    auroc: a,
                });
            }
        }
    }
    out
}

/// Stability scores from a single-group grid; single-class tiles skipped.
pub fn stability_scores(grid: &ScoreGrid, layer: u16) -> Vec<FeatureScore> {
    assert_eq!(grid.n_columns, 64, "one label group expected");
    let mut out = Vec::new();
    for f in 0..grid.n_features {
        for tile in 0..64 {
            if let Some(a) = grid.auroc(f, tile) {
                let c = grid.confusion(f, tile);
                out.push(FeatureScore {
                    layer,
                    feature: f as u32,
                    tile: tile as u8,
                    mode: None,
                    confusion: c,
                    f1: c.f1(),
                    auroc: a,
                });
            }
        }
    }
    out
}
