//! Splitting, metrics, the four-way comparison and the attention report.

pub mod attention_report;
pub mod comparison;
pub mod folds;
pub mod metrics;

pub use attention_report::{attention_report, attention_report_from_predictions, AttentionColumn, AttentionReport, DEFAULT_TOP_N, MASS_SCALE};
pub use comparison::{run_comparison, Arm, ArmResult, Comparison, ComparisonConfig};
pub use folds::{stratified_holdout, stratified_kfold};
pub use metrics::{auroc, class_scores, compute_metrics, macro_f1, roc_curve, ClassMetrics, ConfusionMatrix, MetricsReport};
