//! Stacked LSTM forecaster.
//!
//! Each layer holds an input weight `[C × 4U]`, a recurrent weight `[U × 4U]`
//! and a bias `[4U]`. The four column blocks are the forget gate, input
//! gate, candidate and output gate, in that order:
//!
//! ```text
//! f = σ(a_f)   i = σ(a_i)   g = tanh(a_g)   o = σ(a_o)      a = x·W_x + h·W_h + b
//! c' = f ⊙ c + i ⊙ g
//! h' = o ⊙ tanh(c')
//! ```

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::models::{
    check_windows, derive_seed, Architecture, BoundParams, Forecaster, Mode, ModelParams, ParamSpec,
};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub layer_units: Vec<usize>,
    /// Dropout applied between stacked layers during training.
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    pub input_channels: usize,
}

fn default_dropout() -> f64 {
    0.2
}

impl LstmConfig {
    /// One hidden layer of 64 units.
    pub fn single_layer(input_channels: usize) -> Self {
        Self {
            layer_units: vec![64],
            dropout_rate: default_dropout(),
            input_channels,
        }
    }

    /// Three hidden layers of 64, 45 and 35 units.
    pub fn three_layer(input_channels: usize) -> Self {
        Self {
            layer_units: vec![64, 45, 35],
            dropout_rate: default_dropout(),
            input_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_units.is_empty() || self.layer_units.contains(&0) {
            return Err(Error::Parameter(
                "LSTM layer units must be non-empty and positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Parameter(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.input_channels == 0 {
            return Err(Error::Parameter("input_channels must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Lstm {
    config: LstmConfig,
}

impl Lstm {
    pub fn new(config: LstmConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &LstmConfig {
        &self.config
    }

    fn layer_vars(&self, params: &BoundParams, layer: usize) -> Result<GateVars> {
        Ok(GateVars {
            w_input: params.get(&format!("lstm{layer}.w_input"))?,
            w_recurrent: params.get(&format!("lstm{layer}.w_recurrent"))?,
            bias: params.get(&format!("lstm{layer}.bias"))?,
        })
    }
}

impl Forecaster for Lstm {
    fn kind(&self) -> &'static str {
        "lstm"
    }

    fn input_channels(&self) -> usize {
        self.config.input_channels
    }

    fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        let mut fan = self.config.input_channels;
        for (l, &units) in self.config.layer_units.iter().enumerate() {
            specs.push(ParamSpec::weight(
                format!("lstm{l}.w_input"),
                vec![fan, 4 * units],
                fan,
                4 * units,
            ));
            specs.push(ParamSpec::weight(
                format!("lstm{l}.w_recurrent"),
                vec![units, 4 * units],
                units,
                4 * units,
            ));
            specs.push(ParamSpec::bias(format!("lstm{l}.bias"), 4 * units));
            fan = units;
        }
        specs.push(ParamSpec::weight("head.weight", vec![fan, 1], fan, 1));
        specs.push(ParamSpec::bias("head.bias", 1));
        specs
    }

    fn forward(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        windows: Var,
        mode: Mode,
    ) -> Result<Var> {
        let (batch, steps) = check_windows(tape, windows, self.config.input_channels)?;
        let mut sequence = (0..steps)
            .map(|t| tape.select_time(windows, t))
            .collect::<Result<Vec<_>>>()?;

        let layers = self.config.layer_units.len();
        for (l, &units) in self.config.layer_units.iter().enumerate() {
            let gates = self.layer_vars(params, l)?;
            let mut h = tape.constant(Tensor::zeros(&[batch, units]));
            let mut c = tape.constant(Tensor::zeros(&[batch, units]));
            let mut outputs = Vec::with_capacity(steps);
            for &x in &sequence {
                (h, c) = cell_step(tape, x, h, c, &gates, units)?;
                outputs.push(h);
            }
            if l + 1 < layers {
                if let Mode::Train { seed } = mode {
                    for (t, out) in outputs.iter_mut().enumerate() {
                        let s = derive_seed(seed, l as u64, t as u64);
                        *out = tape.dropout(*out, self.config.dropout_rate, s, true)?;
                    }
                }
            }
            sequence = outputs;
        }

        let last = *sequence.last().expect("steps checked non-zero");
        tape.affine(last, params.get("head.weight")?, params.get("head.bias")?)
    }

    fn architecture(&self) -> Architecture {
        Architecture::Lstm(self.config.clone())
    }
}

struct GateVars {
    w_input: Var,
    w_recurrent: Var,
    bias: Var,
}

/// One recurrent step for a batch: `x [B × C]`, `h`, `c` `[B × U]`.
fn cell_step(
    tape: &mut Tape,
    x: Var,
    h: Var,
    c: Var,
    gates: &GateVars,
    units: usize,
) -> Result<(Var, Var)> {
    let from_input = tape.affine(x, gates.w_input, gates.bias)?;
    let from_state = tape.matmul(h, gates.w_recurrent)?;
    let pre = tape.add(from_input, from_state)?;

    let a_f = tape.slice_cols(pre, 0, units)?;
    let a_i = tape.slice_cols(pre, units, units)?;
    let a_g = tape.slice_cols(pre, 2 * units, units)?;
    let a_o = tape.slice_cols(pre, 3 * units, units)?;
    let f = tape.sigmoid(a_f)?;
    let i = tape.sigmoid(a_i)?;
    let g = tape.tanh(a_g)?;
    let o = tape.sigmoid(a_o)?;

    let kept = tape.mul(f, c)?;
    let written = tape.mul(i, g)?;
    let c_next = tape.add(kept, written)?;
    let squashed = tape.tanh(c_next)?;
    let h_next = tape.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// Gate tensors for a single layer, columns ordered forget/input/candidate/output.
#[derive(Clone, Debug)]
pub struct LstmGates {
    pub w_input: Tensor,
    pub w_recurrent: Tensor,
    pub bias: Tensor,
}

impl LstmGates {
    /// Gates of layer `layer` in a parameter set.
    pub fn from_params(params: &ModelParams, layer: usize) -> Result<Self> {
        Ok(Self {
            w_input: params.get(&format!("lstm{layer}.w_input"))?.clone(),
            w_recurrent: params.get(&format!("lstm{layer}.w_recurrent"))?.clone(),
            bias: params.get(&format!("lstm{layer}.bias"))?.clone(),
        })
    }
}

/// A single LSTM step on unbatched vectors, returning `(h, c)`.
pub fn lstm_cell(
    x_t: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    gates: &LstmGates,
) -> Result<(Tensor, Tensor)> {
    let units = h_prev.numel();
    if c_prev.numel() != units {
        return Err(Error::dim("lstm_cell", h_prev.shape(), c_prev.shape()));
    }
    if gates.w_recurrent.shape() != [units, 4 * units] {
        return Err(Error::dim(
            "lstm_cell",
            &[units, 4 * units],
            gates.w_recurrent.shape(),
        ));
    }
    let mut tape = Tape::new();
    let x = tape.constant(x_t.clone().reshape(&[1, x_t.numel()])?);
    let h = tape.constant(h_prev.clone().reshape(&[1, units])?);
    let c = tape.constant(c_prev.clone().reshape(&[1, units])?);
    let vars = GateVars {
        w_input: tape.constant(gates.w_input.clone()),
        w_recurrent: tape.constant(gates.w_recurrent.clone()),
        bias: tape.constant(gates.bias.clone()),
    };
    let (h_next, c_next) = cell_step(&mut tape, x, h, c, &vars, units)?;
    Ok((
        tape.value(h_next).clone().reshape(&[units])?,
        tape.value(c_next).clone().reshape(&[units])?,
    ))
}

/// Prediction for a single `[W × C]` window.
pub fn lstm_forward(
    window: &Tensor,
    config: &LstmConfig,
    params: &ModelParams,
    mode: Mode,
) -> Result<f64> {
    let model = Lstm::new(config.clone())?;
    let [steps, channels] = *window.shape() else {
        return Err(Error::Contract(format!(
            "expected a [W × C] window, got {:?}",
            window.shape()
        )));
    };
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let input = tape.constant(window.clone().reshape(&[1, steps, channels])?);
    let out = model.forward(&mut tape, &bound, input, mode)?;
    tape.value(out).item()
}
