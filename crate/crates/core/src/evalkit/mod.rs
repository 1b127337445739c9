//! Classification metrics, score curves and the class-mix/split sweep.

mod curves;
mod metrics;
mod sweep;

pub use curves::{pr_curve, roc, trapezoid, CurveData, CurveKind};
pub use metrics::{confusion, metrics, metrics_from_confusion, Averages, ClassMetrics, ConfusionMatrix, MetricsReport};
pub use sweep::{default_table5_grid, sweep_table5, CellSplit, SweepCell, SweepResult, SweepRow};
