//! Forecaster architectures and the registry that selects them by name.
//!
//! Every architecture implements [`Forecaster`]: it declares its parameter
//! layout and records a batched forward pass on a [`Tape`]. The
//! [`ModelRegistry`] maps preset names such as `tcn` or `lstm-3` to
//! factories, so the runner can pick a model from configuration alone.

mod lstm;
mod params;
mod registry;
mod tcn;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

pub use lstm::{lstm_cell, lstm_forward, Lstm, LstmConfig, LstmGates};
pub use params::{BoundParams, ModelParams, ParamSpec};
pub use registry::{ModelFactory, ModelOptions, ModelRegistry};
pub use tcn::{receptive_field, tcn_forward, Tcn, TcnConfig};

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout enabled; masks derive from `seed`.
    Train {
        seed: u64,
    },
    Infer,
}

/// A one-step-ahead forecaster over `[W × C]` input windows.
pub trait Forecaster: Send + Sync + fmt::Debug {
    /// Architecture family, e.g. `"tcn"`.
    fn kind(&self) -> &'static str;

    fn input_channels(&self) -> usize;

    /// Parameter names and shapes, in initialization order.
    fn param_specs(&self) -> Vec<ParamSpec>;

    /// Records the forward pass for a `[B × W × C]` batch and returns the
    /// `[B × 1]` predictions.
    fn forward(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        windows: Var,
        mode: Mode,
    ) -> Result<Var>;

    /// Serializable description sufficient to rebuild this model.
    fn architecture(&self) -> Architecture;

    fn init_params(&self, seed: u64) -> ModelParams {
        ModelParams::glorot(&self.param_specs(), seed)
    }
}

/// Serializable architecture description stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    Tcn(TcnConfig),
    Lstm(LstmConfig),
}

impl Architecture {
    pub fn build(&self) -> Result<Box<dyn Forecaster>> {
        Ok(match self {
            Architecture::Tcn(cfg) => Box::new(Tcn::new(cfg.clone())?),
            Architecture::Lstm(cfg) => Box::new(Lstm::new(cfg.clone())?),
        })
    }
}

/// Validates a `[B × W × C]` window batch against the expected channel count.
pub(crate) fn check_windows(tape: &Tape, windows: Var, channels: usize) -> Result<(usize, usize)> {
    let shape = tape.value(windows).shape();
    let [batch, steps, c] = *shape else {
        return Err(Error::Contract(format!(
            "forecasters expect [B × W × C] windows, got {shape:?}"
        )));
    };
    if steps == 0 {
        return Err(Error::EmptyWindow);
    }
    if c != channels {
        return Err(Error::dim("window channels", &[channels], &[c]));
    }
    Ok((batch, steps))
}

/// Mixes a base seed with two indices into an independent stream seed.
pub(crate) fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z =
        seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
