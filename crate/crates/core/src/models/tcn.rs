//! Temporal convolutional forecaster: stacked dilated convolutions with
//! `tanh` and a linear head on the last timestep.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Padding, Tape, Var};
use crate::error::{Error, Result};
use crate::models::{
    check_windows, Architecture, BoundParams, Forecaster, Mode, ModelParams, ParamSpec,
};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcnConfig {
    pub num_blocks: usize,
    pub filters: usize,
    /// Temporal taps per kernel; each tap spans all input channels.
    pub kernel_length: usize,
    pub dilations: Vec<usize>,
    #[serde(default)]
    pub padding: Padding,
    pub input_channels: usize,
}

impl TcnConfig {
    /// Three blocks of 84 filters, kernel length 5, dilations 1, 2, 4.
    pub fn with_inputs(input_channels: usize) -> Self {
        Self {
            num_blocks: 3,
            filters: 84,
            kernel_length: 5,
            dilations: vec![1, 2, 4],
            padding: Padding::Causal,
            input_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dilations.len() != self.num_blocks {
            return Err(Error::Parameter(format!(
                "{} dilations given for {} blocks",
                self.dilations.len(),
                self.num_blocks
            )));
        }
        if self.num_blocks == 0
            || self.filters == 0
            || self.kernel_length == 0
            || self.input_channels == 0
        {
            return Err(Error::Parameter(
                "TCN blocks, filters, kernel length and inputs must be positive".into(),
            ));
        }
        if self.dilations.contains(&0) {
            return Err(Error::Parameter("dilations must be positive".into()));
        }
        Ok(())
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(self.kernel_length, &self.dilations)
    }
}

/// Past timesteps that can influence one causal output: `1 + (K−1)·Σd`.
pub fn receptive_field(kernel_length: usize, dilations: &[usize]) -> usize {
    1 + (kernel_length - 1) * dilations.iter().sum::<usize>()
}

#[derive(Clone, Debug)]
pub struct Tcn {
    config: TcnConfig,
}

impl Tcn {
    pub fn new(config: TcnConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &TcnConfig {
        &self.config
    }

    /// Output of the last convolutional block, `[B × W × filters]`.
    pub fn features(&self, tape: &mut Tape, params: &BoundParams, windows: Var) -> Result<Var> {
        check_windows(tape, windows, self.config.input_channels)?;
        let mut h = windows;
        for (b, &dilation) in self.config.dilations.iter().enumerate() {
            let kernel = params.get(&format!("block{b}.kernel"))?;
            let bias = params.get(&format!("block{b}.bias"))?;
            let conv = tape.conv1d_dilated(h, kernel, bias, dilation, self.config.padding)?;
            h = tape.tanh(conv)?;
        }
        Ok(h)
    }
}

impl Forecaster for Tcn {
    fn kind(&self) -> &'static str {
        "tcn"
    }

    fn input_channels(&self) -> usize {
        self.config.input_channels
    }

    fn param_specs(&self) -> Vec<ParamSpec> {
        let k = self.config.kernel_length;
        let f = self.config.filters;
        let mut specs = Vec::new();
        let mut c_in = self.config.input_channels;
        for b in 0..self.config.num_blocks {
            specs.push(ParamSpec::weight(
                format!("block{b}.kernel"),
                vec![k, c_in, f],
                k * c_in,
                k * f,
            ));
            specs.push(ParamSpec::bias(format!("block{b}.bias"), f));
            c_in = f;
        }
        specs.push(ParamSpec::weight("head.weight", vec![f, 1], f, 1));
        specs.push(ParamSpec::bias("head.bias", 1));
        specs
    }

    fn forward(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        windows: Var,
        _mode: Mode,
    ) -> Result<Var> {
        let (_, steps) = check_windows(tape, windows, self.config.input_channels)?;
        let features = self.features(tape, params, windows)?;
        let last = tape.select_time(features, steps - 1)?;
        tape.affine(last, params.get("head.weight")?, params.get("head.bias")?)
    }

    fn architecture(&self) -> Architecture {
        Architecture::Tcn(self.config.clone())
    }
}

/// Prediction for a single `[W × C]` window.
pub fn tcn_forward(window: &Tensor, config: &TcnConfig, params: &ModelParams) -> Result<f64> {
    let model = Tcn::new(config.clone())?;
    let [steps, channels] = *window.shape() else {
        return Err(Error::Contract(format!(
            "expected a [W × C] window, got {:?}",
            window.shape()
        )));
    };
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let input = tape.constant(window.clone().reshape(&[1, steps, channels])?);
    let out = model.forward(&mut tape, &bound, input, Mode::Infer)?;
    tape.value(out).item()
}
