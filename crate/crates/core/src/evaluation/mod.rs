//! The subset/fold protocol, confusion matrices and regime comparison.
//!
//! Each projected class is split into `S` subsets; every fold tests one
//! subset per class and trains on the rest, for `S^C` folds in total.
//! Results of all folds accumulate into a single confusion matrix.

mod compare;
mod experiment;
mod folds;
mod matrix;
mod partition;

pub use compare::{compare_logs, compare_regimes, ComparisonReport, PairwiseComparison, RecallPrecision};
pub use experiment::{
    regime_config, run_experiment, ExperimentReport, ExperimentResult, LogEntry, TagTable,
};
pub use folds::{enumerate_folds, Fold, FoldPlan};
pub use matrix::{ClassMetrics, ConfusionMatrix, MetricsReport, SuperclassMetrics};
pub use partition::{partition_subsets, PartitionProtocol, SubsetPartition};
