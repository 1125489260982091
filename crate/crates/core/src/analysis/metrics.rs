// SPDX-License-Identifier: MIT OR Apache-2.0

//! Confusion counts, F1 and AUROC for one feature against one label column.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: u32,
    pub fp: u32,
    pub tn: u32,
    pub fn_: u32,
}

impl Confusion {
    pub fn total(&self) -> u32 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn f1(&self) -> f64 {
        f1(self.tp, self.fp, self.fn_)
    }

    /// `(1 + TPR - FPR) / 2`; `None` when either class is absent.
    pub fn balanced_auroc(&self) -> Option<f64> {
        let pos = u64::from(self.tp) + u64::from(self.fn_);
        let neg = u64::from(self.fp) + u64::from(self.tn);
        if pos == 0 || neg == 0 {
            return None;
        }
        let tpr = f64::from(self.tp) / pos as f64;
        let fpr = f64::from(self.fp) / neg as f64;
        Some((1.0 + tpr - fpr) / 2.0)
    }
}

fn check_lengths(values: usize, labels: usize) -> Result<()> {
    if values != labels {
        return Err(Error::LengthMismatch {
            left: values,
            right: labels,
        });
    }
    if values == 0 {
        return Err(Error::InvalidLabel("no samples".into()));
    }
    Ok(())
}

/// Counts with the feature taken as active when its value is > 0.
pub fn binary_confusion(values: &[f32], labels: &[bool]) -> Result<Confusion> {
    check_lengths(values.len(), labels.len())?;
    let mut c = Confusion::default();
    for (&v, &y) in values.iter().zip(labels) {
        match (v > 0.0, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `2tp / (2tp + fp + fn)`, and 0 when the denominator is 0.
pub fn f1(tp: u32, fp: u32, fn_: u32) -> f64 {
    let den = 2 * u64::from(tp) + u64::from(fp) + u64::from(fn_);
    if den == 0 {
        0.0
    } else {
        2.0 * f64::from(tp) / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AurocMethod {
    /// Mann-Whitney statistic on raw values, ties counted half.
    #[default]
    Rank,
    /// Balanced accuracy of the > 0 binarisation.
    BinaryTrapezoid,
}

/// 1-based ranks with ties averaged. Exact zeros are common in sparse
/// codes, so they are ranked as one block without being sorted.
pub fn average_ranks(values: &[f32]) -> Result<Vec<f64>> {
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::NonFiniteValue(format!("NaN value at index {i}")));
    }
    let n = values.len();
    let mut nonzero: Vec<usize> = (0..n).filter(|&i| values[i] != 0.0).collect();
    nonzero.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let n_below = nonzero.partition_point(|&i| values[i] < 0.0);
    let zeros = n - nonzero.len();

    let mut ranks = vec![0f64; n];
    // Zero block occupies ranks n_below+1 ..= n_below+zeros.
    let zero_rank = n_below as f64 + (zeros as f64 + 1.0) / 2.0;
    for (i, &v) in values.iter().enumerate() {
        if v == 0.0 {
            ranks[i] = zero_rank;
        }
    }
    let mut k = 0;
    while k < nonzero.len() {
        let mut end = k + 1;
        while end < nonzero.len() && values[nonzero[end]] == values[nonzero[k]] {
            end += 1;
        }
        // Positions k..end (0-based within the sorted nonzeros).
        let offset = if k >= n_below { zeros } else { 0 };
        let first = (k + offset + 1) as f64;
        let last = (end + offset) as f64;
        let r = (first + last) / 2.0;
        for &i in &nonzero[k..end] {
            ranks[i] = r;
        }
        k = end;
    }
    Ok(ranks)
}

/// AUROC from the positive-class rank sum.
pub fn auroc_from_rank_sum(rank_sum: f64, n_pos: u64, n_neg: u64) -> Option<f64> {
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let p = n_pos as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Some(u / (p * n_neg as f64))
}

pub fn auroc(values: &[f32], labels: &[bool], method: AurocMethod) -> Result<f64> {
    check_lengths(values.len(), labels.len())?;
    let n_pos = labels.iter().filter(|&&y| y).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    match method {
        AurocMethod::Rank => {
            let ranks = average_ranks(values)?;
            let sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y).map(|(r, _)| r).sum();
            Ok(auroc_from_rank_sum(sum, n_pos, n_neg).expect("both classes present"))
        }
        AurocMethod::BinaryTrapezoid => Ok(binary_confusion(values, labels)?
            .balanced_auroc()
            .expect("both classes present")),
    }
}
