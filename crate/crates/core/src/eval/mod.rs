//! Thresholds, TDR at a target FDR, per-material reports, timing and
//! feature export.

pub mod bench;
pub mod features;
pub mod metrics;
pub mod plots;
pub mod report;

use thiserror::Error;

pub use bench::{benchmark_speed, hardware_description, BenchReport, StageTiming, REFERENCE_TIMING};
pub use features::{export_features, features_csv, FeatureRow};
pub use metrics::{auc, roc_auc, roc_points, tdr_at_fdr, threshold_at_fdr, OperatingPoint};
pub use report::{per_material_report, EvalReport, MaterialTdr, Provenance, ScoreTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("score list is empty")]
    EmptyScores,
    #[error("row {row}: unknown label {label:?}")]
    UnknownLabel { row: usize, label: String },
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("{0}")]
    Domain(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Detector(#[from] crate::detector::DetectorError),
    #[error(transparent)]
    Preprocess(#[from] crate::preprocess::PreprocessError),
}
