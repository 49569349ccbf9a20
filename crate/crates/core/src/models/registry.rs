use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::autodiff::Padding;
use crate::error::{Error, Result};
use crate::models::{Forecaster, Lstm, LstmConfig, Tcn, TcnConfig};

/// Builds a forecaster from preset overrides.
pub type ModelFactory = Box<dyn Fn(&ModelOptions) -> Result<Box<dyn Forecaster>> + Send + Sync>;

/// Overrides applied on top of a preset. Fields irrelevant to the chosen
/// architecture are ignored.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    pub input_channels: usize,
    pub num_blocks: Option<usize>,
    pub filters: Option<usize>,
    pub kernel_length: Option<usize>,
    pub dilations: Option<Vec<usize>>,
    pub padding: Option<Padding>,
    pub layer_units: Option<Vec<usize>>,
    pub dropout_rate: Option<f64>,
}

impl ModelOptions {
    pub fn with_inputs(input_channels: usize) -> Self {
        Self {
            input_channels,
            ..Self::default()
        }
    }

    fn apply_tcn(&self, mut cfg: TcnConfig) -> TcnConfig {
        if let Some(d) = &self.dilations {
            cfg.dilations = d.clone();
            cfg.num_blocks = d.len();
        }
        if let Some(n) = self.num_blocks {
            cfg.num_blocks = n;
            if self.dilations.is_none() {
                cfg.dilations = (0..n).map(|b| 1usize << b).collect();
            }
        }
        cfg.filters = self.filters.unwrap_or(cfg.filters);
        cfg.kernel_length = self.kernel_length.unwrap_or(cfg.kernel_length);
        cfg.padding = self.padding.unwrap_or(cfg.padding);
        cfg
    }

    fn apply_lstm(&self, mut cfg: LstmConfig) -> LstmConfig {
        if let Some(units) = &self.layer_units {
            cfg.layer_units = units.clone();
        }
        cfg.dropout_rate = self.dropout_rate.unwrap_or(cfg.dropout_rate);
        cfg
    }
}

struct Entry {
    description: String,
    factory: ModelFactory,
}

/// Named model presets, resolved at runtime.
pub struct ModelRegistry {
    entries: BTreeMap<String, Entry>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// The three presets: `tcn`, `lstm-1` and `lstm-3`.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(
            "tcn",
            "3 dilated conv blocks (1, 2, 4), 84 filters, kernel 5, tanh",
            |opts| {
                let cfg = opts.apply_tcn(TcnConfig::with_inputs(opts.input_channels));
                Ok(Box::new(Tcn::new(cfg)?) as Box<dyn Forecaster>)
            },
        );
        reg.register("lstm-1", "one LSTM layer of 64 units", |opts| {
            let cfg = opts.apply_lstm(LstmConfig::single_layer(opts.input_channels));
            Ok(Box::new(Lstm::new(cfg)?) as Box<dyn Forecaster>)
        });
        reg.register(
            "lstm-3",
            "LSTM layers of 64, 45 and 35 units, dropout 0.2",
            |opts| {
                let cfg = opts.apply_lstm(LstmConfig::three_layer(opts.input_channels));
                Ok(Box::new(Lstm::new(cfg)?) as Box<dyn Forecaster>)
            },
        );
        reg
    }

    /// Adds or replaces a preset.
    pub fn register<F>(
        &mut self,
        name: impl Into<String>,
        description: impl Into<String>,
        factory: F,
    ) where
        F: Fn(&ModelOptions) -> Result<Box<dyn Forecaster>> + Send + Sync + 'static,
    {
        self.entries.insert(
            name.into(),
            Entry {
                description: description.into(),
                factory: Box::new(factory),
            },
        );
    }

    pub fn create(&self, name: &str, options: &ModelOptions) -> Result<Box<dyn Forecaster>> {
        let entry = self.entries.get(name).ok_or_else(|| {
            Error::Parameter(format!(
                "unknown model `{name}`; available: {}",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        (entry.factory)(options)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn describe(&self, name: &str) -> Option<&str> {
        self.entries.get(name).map(|e| e.description.as_str())
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl fmt::Debug for ModelRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.entries.keys()).finish()
    }
}
