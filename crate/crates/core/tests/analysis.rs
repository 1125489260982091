// SPDX-License-Identifier: MIT OR Apache-2.0

//! Scoring and selection against brute-force oracles.

mod common;

use owml::analysis::{
    aggregate_seed_frequency, auroc, binary_confusion, score_features, stability_feature_frequency,
    stability_tile_frequency, AurocMethod, Confusion, FeatureScore, LabelGroups, TallyMode,
};
use owml::diffcompute::Tensor2D;
use owml::probes::random_alignment_baseline;
use owml::Error;
use proptest::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF};

/// Values drawn from a small set so ties and exact zeros are common.
fn samples() -> impl Strategy<Value = (Vec<f32>, Vec<bool>)> {
    (1usize..=200).prop_flat_map(|n| {
        (
            prop::collection::vec((-3i32..=6).prop_map(|k| k as f32 * 0.5), n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rank_auroc_equals_pairwise_oracle((values, labels) in samples()) {
        let oracle = common::pairwise_auroc(&widen(&values), &labels);
        match auroc(&values, &labels, AurocMethod::Rank) {
            Ok(a) => prop_assert_eq!(Some(a), oracle),
            Err(Error::SingleClass) => prop_assert_eq!(oracle, None),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn binary_auroc_is_balanced_accuracy((values, labels) in samples()) {
        let pos = labels.iter().filter(|&&y| y).count();
        let neg = labels.len() - pos;
        let tp = values.iter().zip(&labels).filter(|(v, y)| **v > 0.0 && **y).count();
        let fp = values.iter().zip(&labels).filter(|(v, y)| **v > 0.0 && !**y).count();
        let got = auroc(&values, &labels, AurocMethod::BinaryTrapezoid);
        if pos == 0 || neg == 0 {
            prop_assert!(matches!(got, Err(Error::SingleClass)));
        } else {
            let want = (1.0 + tp as f64 / pos as f64 - fp as f64 / neg as f64) / 2.0;
            prop_assert_eq!(got.unwrap(), want);
        }
    }

    #[test]
    fn metrics_survive_joint_permutation((values, labels) in samples(), seed in any::<u64>()) {
        let n = values.len();
        let mut order: Vec<usize> = (0..n).collect();
        // Fisher-Yates driven by a tiny LCG, independent of the library RNG.
        let mut s = seed | 1;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1_442_695_040_888_963_407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let pv: Vec<f32> = order.iter().map(|&i| values[i]).collect();
        let pl: Vec<bool> = order.iter().map(|&i| labels[i]).collect();
        prop_assert_eq!(binary_confusion(&values, &labels).unwrap(), binary_confusion(&pv, &pl).unwrap());
        let a = auroc(&values, &labels, AurocMethod::Rank).ok();
        let b = auroc(&pv, &pl, AurocMethod::Rank).ok();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn batch_scorer_matches_oracles() {
    let mut state = 12345u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let (n, nf) = (180, 9);
    let feats = Tensor2D::from_fn(n, nf, |_, _| match next() % 5 {
        0 | 1 => 0.0,
        k => (k as f32 - 3.0) * 0.75 + (next() % 3) as f32 * 0.25,
    });
    let groups: Vec<Vec<u64>> = (0..2)
        .map(|_| (0..n).map(|_| next() & next()).collect())
        .collect();
    let labels = LabelGroups::new(groups.clone()).unwrap();
    let grid = score_features(&feats, &labels).unwrap();
    for f in 0..nf {
        let col: Vec<f32> = (0..n).map(|r| feats.get(r, f)).collect();
        for c in 0..128 {
            let y: Vec<bool> = (0..n).map(|r| groups[c / 64][r] >> (c % 64) & 1 == 1).collect();
            assert_eq!(grid.auroc(f, c), common::pairwise_auroc(&widen(&col), &y));
            let mut want = Confusion::default();
            for (v, l) in col.iter().zip(&y) {
                match (*v > 0.0, *l) {
                    (true, true) => want.tp += 1,
                    (true, false) => want.fp += 1,
                    (false, false) => want.tn += 1,
                    (false, true) => want.fn_ += 1,
                }
            }
            assert_eq!(grid.confusion(f, c), want);
            assert_eq!(want.total() as usize, n);
        }
    }
}

#[test]
fn frequency_tables_conserve_pairs() {
    let mut scores = Vec::new();
    for layer in 1..=4u16 {
        for feature in 0..30u32 {
            for tile in 0..64u8 {
                let a = f64::from((feature * 7 + u32::from(tile) * 13 + u32::from(layer) * 3) % 100) / 100.0;
                scores.push(FeatureScore {
                    layer,
                    feature,
                    tile,
                    mode: None,
                    confusion: Confusion::default(),
                    f1: 0.0,
                    auroc: a,
                });
            }
        }
    }
    let qualifying = scores.iter().filter(|s| s.auroc > 0.8).count() as u64;
    let grids: u64 = (1..=4)
        .map(|l| stability_tile_frequency(&scores, l, 0.8).total())
        .sum();
    assert_eq!(grids, qualifying);
    let rows = stability_feature_frequency(&scores, 4, 0.8).unwrap();
    assert_eq!(rows.iter().map(|r| u64::from(r.total)).sum::<u64>(), qualifying);
    assert!(rows.iter().all(|r| r.total == r.per_layer.iter().sum::<u32>()));
    assert!(rows.windows(2).all(|w| w[0].total >= w[1].total));

    let layer1: Vec<FeatureScore> = scores.iter().filter(|s| s.layer == 1).copied().collect();
    let chosen: Vec<u32> = (0..30).collect();
    let per_tile = aggregate_seed_frequency(
        &[(0, chosen, &layer1[..])],
        1,
        TallyMode::PerTile { threshold: 0.8 },
    )
    .unwrap();
    assert_eq!(
        per_tile.total(),
        layer1.iter().filter(|s| s.auroc > 0.8).count() as u64
    );
}

#[test]
fn alignment_baseline_matches_beta_law() {
    // For independent uniform directions in d dimensions, cos^2 follows
    // Beta(1/2, (d - 1) / 2).
    for (d, t) in [(128usize, 0.2f64), (16, 0.3)] {
        let samples = 100_000;
        let exact = 1.0 - Beta::new(0.5, (d as f64 - 1.0) / 2.0).unwrap().cdf(t * t);
        let mc = random_alignment_baseline(d, t, samples, 5);
        let sigma = (exact * (1.0 - exact) / samples as f64).sqrt();
        assert!((mc - exact).abs() < 4.0 * sigma, "d={d}: {mc} vs {exact}");
    }
}
