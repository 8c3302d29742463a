//! Metrics, the leave-one-speaker-out and cross-corpus protocols, paired
//! significance tests and group/cluster analyses.

mod analysis;
mod experiment;
mod loso;
mod metrics;
mod report;
mod stats;

pub use analysis::{
    cluster_attribute_ratios, group_breakdown, ClusterRatioReport, ClusterRatios, GroupBreakdown, GroupScore,
    Prediction, Ratio,
};
pub use experiment::{
    run_cross_corpus, run_within_corpus, train_models, CrossCorpusReport, CrossModelSummary, ExperimentConfig,
    ExperimentSetup, ModelKind, SeedScores, SeedUar, SubjectScore, TrainedModel, WithinCorpusReport,
    WithinModelSummary, REPORT_SCHEMA_VERSION,
};
pub use loso::{loso_split, LosoFold, LosoPlan};
pub use metrics::{adjusted_rand_index, uar, ConfusionMatrix};
pub use report::{render_cluster_ratios, render_cross, render_within, table};
pub use stats::{paired_t_test, TTestResult};
