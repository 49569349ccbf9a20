use std::ops::Range;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class of a single timestep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    /// Attack in ground truth, anomaly in a verdict.
    Anomaly,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Anomaly => "anomaly",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "normal" => Some(Label::Normal),
            "anomaly" => Some(Label::Anomaly),
            _ => None,
        }
    }
}

/// Time-indexed multivariate series with optional per-row labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesFrame {
    timestamps: Vec<DateTime<Utc>>,
    channel_names: Vec<String>,
    columns: Vec<Vec<f64>>,
    labels: Option<Vec<Label>>,
}

impl SeriesFrame {
    pub fn new(
        timestamps: Vec<DateTime<Utc>>,
        channel_names: Vec<String>,
        columns: Vec<Vec<f64>>,
        labels: Option<Vec<Label>>,
    ) -> Result<Self> {
        let rows = timestamps.len();
        if channel_names.len() != columns.len() {
            return Err(Error::Schema(format!(
                "{} channel names for {} columns",
                channel_names.len(),
                columns.len()
            )));
        }
        for (name, col) in channel_names.iter().zip(&columns) {
            if col.len() != rows {
                return Err(Error::Schema(format!(
                    "channel `{name}` has {} rows, expected {rows}",
                    col.len()
                )));
            }
        }
        if let Some(l) = &labels {
            if l.len() != rows {
                return Err(Error::Schema(format!("{} labels for {rows} rows", l.len())));
            }
        }
        if let Some(row) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Ordering { row: row + 1 });
        }
        Ok(Self {
            timestamps,
            channel_names,
            columns,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn num_channels(&self) -> usize {
        self.columns.len()
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn channel_index(&self, name: &str) -> Result<usize> {
        self.channel_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.columns[self.channel_index(name)?])
    }

    /// Label of `row`, treating unlabeled frames as all-normal.
    pub fn label(&self, row: usize) -> Label {
        self.labels.as_ref().map_or(Label::Normal, |l| l[row])
    }

    /// Number of rows labeled as attacks.
    pub fn attack_count(&self) -> usize {
        self.labels
            .as_ref()
            .map_or(0, |l| l.iter().filter(|&&x| x == Label::Anomaly).count())
    }

    /// Contiguous row range as a new frame.
    pub fn slice(&self, rows: Range<usize>) -> Self {
        Self {
            timestamps: self.timestamps[rows.clone()].to_vec(),
            channel_names: self.channel_names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| c[rows.clone()].to_vec())
                .collect(),
            labels: self.labels.as_ref().map(|l| l[rows].to_vec()),
        }
    }

    /// Same rows and labels with replaced channel values.
    pub(crate) fn with_columns(&self, columns: Vec<Vec<f64>>) -> Self {
        Self {
            timestamps: self.timestamps.clone(),
            channel_names: self.channel_names.clone(),
            columns,
            labels: self.labels.clone(),
        }
    }
}
