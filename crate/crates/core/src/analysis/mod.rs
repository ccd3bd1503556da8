//! Metric-versus-metric and metric-versus-human correlation analyses.

mod annotations;
mod overlap;
mod rank;

pub use annotations::{
    aggregate_annotations, aggregate_annotations_for, category_totals, filter_noisy, load_annotations,
    AggregatedReport, AnnotationRecord, ErrorCategory, ErrorCount,
};
pub use overlap::{
    binomial_interval, dependent_overlapping_test, null_rejection_rate, rkh_sweep, Alternative, CalibrationResult,
    OverlapTestInput, OverlapTestResult, SignificanceReport, SweepRow, TestVariant,
};
pub use rank::{
    kendall_tau, metric_correlation_table, oracle_group_correlation, orient_scores, pearson, percent, ranks, spearman,
    spearman_rho, CorrelationMethod, CorrelationResult, MetricCorrelation, OracleCorrelation,
};
