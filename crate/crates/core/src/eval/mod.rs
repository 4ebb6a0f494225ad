//! Metrics, threshold calibration, sweeps, split aggregation and plot export.

mod metrics;
mod pca;
mod report;
mod sweep;

pub use metrics::{aupr_ood, auroc, calibrate_threshold, fpr_at_tpr, ScoredSet};
pub use pca::{pca2d_project, projection_csv, Projection};
pub use report::{aggregate_splits, ConfigSnapshot, EvalReport, MetricSet, SummaryReport};
pub use sweep::{grid, select_best, sweep, GridPoint, SweepOutcome, SweepRow};
