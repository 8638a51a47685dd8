//! Evaluation suite: closest-record privacy scores, column and pairwise
//! fidelity, density-based precision/recall, downstream utility with
//! built-in learners, and cross-run analysis helpers.

mod analysis;
mod density;
mod distance;
mod distribution;
mod learners;
mod report;
mod utility;

pub use analysis::{
    balanced_score, best_balanced, correlation_matrix, ranks, read_frontier_csv, spearman, write_frontier_csv,
    write_matrix_csv, zscore_normalize, CorrelationMatrices, FrontierPoint, GroupKey, ZScores, MIN_OVERLAP,
};
pub use density::{ip_alpha, ir_beta, DEFAULT_K};
pub use distance::{dcr, dcr_overfit, dcr_overfit_score, DcrOverfit, DistanceConfig, PreparedRows};
pub use distribution::{ks_statistic, pearson, shape, shape_columns, total_variation, trend, TrendReport, NUMERIC_BINS};
pub use learners::{
    fit_predict, BoostedStumps, Design, FeatureMap, Learner, LinearModel, Loss, BOOSTING_LR, BOOSTING_ROUNDS,
};
pub use report::{evaluate, EvalSets, MetricReport};
pub use utility::{augmentation_eval, auc, r_squared, utility, Augmentation};
