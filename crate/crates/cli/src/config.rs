//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tsad_core::data::{CsvSchema, SplitFractions, SyntheticSpec};
use tsad_core::detect::{Label, DEFAULT_K};
use tsad_core::models::{ModelOptions, ModelRegistry};
use tsad_core::train::TrainConfig;

use crate::RunError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSource {
    pub path: PathBuf,
    pub schema: CsvSchema,
}

/// Exactly one of `csv` and `synthetic` must be set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    #[serde(default)]
    pub csv: Option<CsvSource>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSelection {
    /// Registry name: `tcn`, `lstm-1` or `lstm-3`.
    pub preset: String,
    /// Architecture overrides. `input_channels` is always taken from the data.
    #[serde(default)]
    pub overrides: ModelOptions,
}

/// Which predictions the threshold's standard deviation is taken over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdSource {
    /// The evaluated (test) segment.
    #[default]
    Evaluation,
    /// The validation segment, keeping the threshold independent of test data.
    Validation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub k: f64,
    pub sd_source: SdSource,
    pub positive_class: Label,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            sd_source: SdSource::Evaluation,
            positive_class: Label::Anomaly,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default = "default_window")]
    pub window_length: usize,
    /// Channel forecast one step ahead and scored for anomalies.
    #[serde(default = "default_target")]
    pub target_channel: String,
    pub model: ModelSelection,
    /// `train.seed` is ignored; the experiment `seed` drives training.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub detection: DetectionConfig,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Seeds initialization, dropout and, when the synthetic spec has no
    /// seed of its own, data generation.
    #[serde(default)]
    pub seed: u64,
}

fn default_window() -> usize {
    30
}

fn default_target() -> String {
    "LIT301".into()
}

fn default_output() -> PathBuf {
    PathBuf::from("runs/latest")
}

impl ExperimentConfig {
    /// Default synthetic scenario with the given preset.
    pub fn synthetic(preset: &str) -> Self {
        Self {
            data: DataSource {
                csv: None,
                synthetic: Some(SyntheticSpec::default()),
            },
            window_length: default_window(),
            target_channel: default_target(),
            model: ModelSelection {
                preset: preset.into(),
                overrides: ModelOptions::default(),
            },
            train: TrainConfig::default(),
            detection: DetectionConfig::default(),
            split: SplitFractions::default(),
            output_dir: default_output(),
            seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Stage {
            stage: "config",
            source: e.into(),
        })?;
        Self::from_json(&text).map_err(|e| match e {
            RunError::Config(msg) => RunError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |msg: String| Err(RunError::Config(msg));
        match (&self.data.csv, &self.data.synthetic) {
            (Some(_), Some(_)) => return bad("both csv and synthetic data sources given".into()),
            (None, None) => return bad("no data source given".into()),
            _ => {}
        }
        if self.window_length == 0 {
            return bad("window_length must be positive".into());
        }
        let registry = ModelRegistry::builtin();
        if registry.describe(&self.model.preset).is_none() {
            return bad(format!(
                "unknown model preset `{}`; available: {}",
                self.model.preset,
                registry.names().collect::<Vec<_>>().join(", ")
            ));
        }
        if !(self.detection.k > 0.0 && self.detection.k.is_finite()) {
            return bad(format!(
                "detection k must be positive, got {}",
                self.detection.k
            ));
        }
        self.train
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        Ok(())
    }

    /// Training configuration with the experiment seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_json_fills_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"data": {"synthetic": {"length": 4000}}, "model": {"preset": "tcn"}, "seed": 3}"#,
        )
        .unwrap();
        assert_eq!(cfg.window_length, 30);
        assert_eq!(cfg.detection.k, 1.75);
        assert_eq!(cfg.train.batch_size, 128);
        assert_eq!(cfg.train_config().seed, 3);
        assert_eq!(cfg.data.synthetic.unwrap().length, 4000);
    }

    #[test]
    fn two_sources_is_a_config_error() {
        let err = ExperimentConfig::from_json(
            r#"{"data": {"synthetic": {}, "csv": {"path": "x.csv", "schema": {"channels": ["a"]}}},
                "model": {"preset": "tcn"}}"#,
        )
        .unwrap_err();
        assert!(
            matches!(err, RunError::Config(ref m) if m.contains("both")),
            "{err}"
        );
    }

    #[test]
    fn unknown_preset_and_fields_are_rejected() {
        let err = ExperimentConfig::from_json(
            r#"{"data": {"synthetic": {}}, "model": {"preset": "gta"}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("lstm-3"));
        assert!(ExperimentConfig::from_json(
            r#"{"data": {"synthetic": {}}, "model": {"preset": "tcn"}, "windw": 3}"#
        )
        .is_err());
    }

    #[test]
    fn json_round_trip() {
        let cfg = ExperimentConfig::synthetic("lstm-3");
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }
}
