// SPDX-License-Identifier: MIT OR Apache-2.0

//! Feature scoring, selection and report emitters.

mod metrics;
mod report;
mod scoring;
mod select;

pub use metrics::{auroc, auroc_from_rank_sum, average_ranks, binary_confusion, f1, AurocMethod, Confusion};
pub use report::{
    accuracy_csv, accuracy_svg, emit_heatmap, heatmap_svg, parse_accuracy_csv, parse_grid_csv, AccuracyPoint,
    ACCURACY_HEADER,
};
pub use scoring::{
    best_mode_scores, parse_score_table, score_features, score_table_csv, stability_scores, FeatureScore,
    LabelGroups, ScoreGrid, SCORE_HEADER,
};
pub use select::{
    aggregate_seed_frequency, feature_frequency_csv, pairs_per_layer, stability_feature_frequency,
    stability_tile_frequency, top_color_features, FeatureFrequencyRow, TallyMode, TileFrequencyGrid,
    COLOR_THRESHOLD, COLOR_TOP_K, STABILITY_THRESHOLD,
};
