//! Forecasting-based anomaly detection for multivariate sensor series.
//!
//! The crate trains temporal convolutional and LSTM forecasters with a small
//! reverse-mode differentiation kernel, then flags points whose one-step-ahead
//! residual exceeds `k` standard deviations of the predictions.
//!
//! Layout:
//! - [`tensor`] and [`autodiff`]: dense `f64` tensors, primitive kernels and the tape.
//! - [`models`]: the forecaster trait, TCN and LSTM architectures, the model registry
//!   and parameter checkpoints.
//! - [`train`]: MSE loss, Adam and the validated training loop.
//! - [`data`]: CSV ingestion, standardization, splitting, windowing and synthetic data.
//! - [`detect`]: residual thresholding, confusion matrices, metrics and reports.

pub mod autodiff;
pub mod data;
pub mod detect;
pub mod error;
pub mod models;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
