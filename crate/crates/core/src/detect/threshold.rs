use std::io::{Read, Write};

use crate::data::Label;
use crate::error::{Error, Result};

/// Multiplier on the prediction standard deviation.
pub const DEFAULT_K: f64 = 1.75;

/// Lower bound on the standard deviation used for thresholds.
pub const SD_FLOOR: f64 = 1e-12;

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Parameter(
            "standard deviation of an empty sequence".into(),
        ));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Ok((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}

/// `k × SD(predictions)`, with the deviation floored at [`SD_FLOOR`].
pub fn detection_threshold(predictions: &[f64], k: f64) -> Result<f64> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Parameter(format!(
            "threshold multiplier must be positive, got {k}"
        )));
    }
    Ok(k * population_std(predictions)?.max(SD_FLOOR))
}

/// Per-point verdicts from absolute prediction residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionResult {
    pub predictions: Vec<f64>,
    pub actuals: Vec<f64>,
    pub residuals: Vec<f64>,
    pub threshold: f64,
    pub predicted_labels: Vec<Label>,
}

/// A point is an anomaly when `|prediction − actual| > threshold`, strictly.
pub fn classify_residuals(
    predictions: &[f64],
    actuals: &[f64],
    threshold: f64,
) -> Result<DetectionResult> {
    if predictions.len() != actuals.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} actuals",
            predictions.len(),
            actuals.len()
        )));
    }
    if !(threshold >= 0.0) {
        return Err(Error::Contract(format!(
            "threshold must be non-negative, got {threshold}"
        )));
    }
    let residuals: Vec<f64> = predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| (p - a).abs())
        .collect();
    let predicted_labels = residuals
        .iter()
        .map(|&r| {
            if r > threshold {
                Label::Anomaly
            } else {
                Label::Normal
            }
        })
        .collect();
    Ok(DetectionResult {
        predictions: predictions.to_vec(),
        actuals: actuals.to_vec(),
        residuals,
        threshold,
        predicted_labels,
    })
}

impl DetectionResult {
    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    pub fn anomaly_count(&self) -> usize {
        self.predicted_labels
            .iter()
            .filter(|&&l| l == Label::Anomaly)
            .count()
    }

    /// CSV with header `index,prediction,actual,residual,label,truth`; the
    /// `truth` column is written only when ground truth is supplied.
    pub fn write_csv<W: Write>(&self, writer: W, truth: Option<&[Label]>) -> Result<()> {
        if let Some(t) = truth {
            if t.len() != self.len() {
                return Err(Error::Contract(format!(
                    "{} truth labels for {} points",
                    t.len(),
                    self.len()
                )));
            }
        }
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["index", "prediction", "actual", "residual", "label"];
        if truth.is_some() {
            header.push("truth");
        }
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![
                i.to_string(),
                self.predictions[i].to_string(),
                self.actuals[i].to_string(),
                self.residuals[i].to_string(),
                self.predicted_labels[i].as_str().to_string(),
            ];
            if let Some(t) = truth {
                rec.push(t[i].as_str().to_string());
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Predicted labels and, when present, the `truth` column of a detections
/// CSV written by [`DetectionResult::write_csv`].
pub fn read_detection_labels<R: Read>(reader: R) -> Result<(Vec<Label>, Option<Vec<Label>>)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let label_col = find("label").ok_or_else(|| Error::MissingColumn("label".into()))?;
    let truth_col = find("truth");
    let mut predicted = Vec::new();
    let mut truth = truth_col.map(|_| Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |col: usize| {
            Label::parse(&rec[col]).ok_or_else(|| Error::Label {
                row: i + 1,
                value: rec[col].to_string(),
            })
        };
        predicted.push(parse(label_col)?);
        if let (Some(col), Some(t)) = (truth_col, truth.as_mut()) {
            t.push(parse(col)?);
        }
    }
    Ok((predicted, truth))
}
