//! Batch experiment runner: configuration, the staged pipeline from raw
//! series to metrics, and artifact emission.

pub mod config;
mod error;
pub mod experiment;
pub mod plots;

pub use config::{DataSource, DetectionConfig, ExperimentConfig, ModelSelection, SdSource};
pub use error::{exit_code, RunError};
pub use experiment::{run_experiment, RunSummary};
