//! ROC-AUC, evaluation reports, shot curves and baseline comparison.

pub mod auc;
pub mod baselines;
pub mod curve;
pub mod report;

pub use auc::roc_auc;
pub use baselines::{compare_with_baselines, reference_report, BaselineTable, ComparisonTable};
pub use curve::{shots_curve, ShotsCurve};
pub use report::{evaluate, report_from_aucs, ClassAuc, EvalReport, ScoreMatrix, ScoreSource};
