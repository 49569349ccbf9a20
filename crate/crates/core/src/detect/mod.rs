//! Residual thresholding and classification metrics.

mod confusion;
mod report;
mod threshold;

pub use confusion::{compute_metrics, confusion_matrix, ConfusionMatrix, Metrics};
pub use report::{compare_report, read_metrics_csv, Report, ReportRow};
pub use threshold::{
    classify_residuals, detection_threshold, population_std, read_detection_labels,
    DetectionResult, DEFAULT_K, SD_FLOOR,
};

pub use crate::data::Label;
