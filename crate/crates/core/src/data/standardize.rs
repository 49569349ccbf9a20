use serde::{Deserialize, Serialize};

use crate::data::SeriesFrame;
use crate::error::{Error, Result};

/// Lower bound applied to fitted standard deviations.
pub const STD_FLOOR: f64 = 1e-12;

/// Per-channel mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub channels: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Channels whose fitted deviation was floored.
    #[serde(default)]
    pub degenerate: Vec<String>,
}

impl StandardizationStats {
    pub fn fit(frame: &SeriesFrame) -> Result<Self> {
        if frame.is_empty() {
            return Err(Error::Parameter(
                "cannot fit standardization on an empty frame".into(),
            ));
        }
        let n = frame.len() as f64;
        let mut stats = Self {
            channels: frame.channel_names().to_vec(),
            mean: Vec::new(),
            std: Vec::new(),
            degenerate: Vec::new(),
        };
        for (name, col) in frame.channel_names().iter().zip(frame.columns()) {
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let mut std = var.sqrt();
            if std < STD_FLOOR {
                log::warn!(
                    "channel `{name}` is constant on the fitting segment; σ floored to {STD_FLOOR}"
                );
                stats.degenerate.push(name.clone());
                std = STD_FLOOR;
            }
            stats.mean.push(mean);
            stats.std.push(std);
        }
        Ok(stats)
    }

    fn check(&self, frame: &SeriesFrame) -> Result<()> {
        if frame.channel_names() != self.channels.as_slice() {
            return Err(Error::Schema(format!(
                "standardization fitted on {:?}, applied to {:?}",
                self.channels,
                frame.channel_names()
            )));
        }
        Ok(())
    }

    /// `(x − μ) / σ` per channel.
    pub fn apply(&self, frame: &SeriesFrame) -> Result<SeriesFrame> {
        self.check(frame)?;
        let columns = frame
            .columns()
            .iter()
            .enumerate()
            .map(|(c, col)| {
                col.iter()
                    .map(|v| (v - self.mean[c]) / self.std[c])
                    .collect()
            })
            .collect();
        Ok(frame.with_columns(columns))
    }

    /// `x̂·σ + μ` per channel.
    pub fn invert(&self, frame: &SeriesFrame) -> Result<SeriesFrame> {
        self.check(frame)?;
        let columns = frame
            .columns()
            .iter()
            .enumerate()
            .map(|(c, col)| col.iter().map(|v| v * self.std[c] + self.mean[c]).collect())
            .collect();
        Ok(frame.with_columns(columns))
    }
}

/// Standardizes `frame`, fitting statistics on it when none are supplied.
/// Supplied statistics are applied as-is and returned unchanged.
pub fn standardize(
    frame: &SeriesFrame,
    stats: Option<&StandardizationStats>,
) -> Result<(SeriesFrame, StandardizationStats)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => StandardizationStats::fit(frame)?,
    };
    Ok((stats.apply(frame)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn frame(cols: Vec<Vec<f64>>) -> SeriesFrame {
        let n = cols[0].len();
        let ts = (0..n as i64)
            .map(|s| Utc.timestamp_opt(s, 0).unwrap())
            .collect();
        let names = (0..cols.len()).map(|i| format!("c{i}")).collect();
        SeriesFrame::new(ts, names, cols, None).unwrap()
    }

    #[test]
    fn uses_population_deviation() {
        let (z, stats) = standardize(&frame(vec![vec![1.0, 2.0, 3.0]]), None).unwrap();
        assert_eq!(stats.mean, vec![2.0]);
        assert!((stats.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let expected = [-1.224745, 0.0, 1.224745];
        for (v, e) in z.columns()[0].iter().zip(expected) {
            assert!((v - e).abs() < 1e-6);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let f = frame(vec![
            vec![3.5, -2.0, 11.25, 0.1],
            vec![1e3, 1e3 + 1.0, 999.0, 1002.5],
        ]);
        let (z, stats) = standardize(&f, None).unwrap();
        let back = stats.invert(&z).unwrap();
        for (a, b) in back
            .columns()
            .iter()
            .flatten()
            .zip(f.columns().iter().flatten())
        {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_channel_is_floored_and_flagged() {
        let (z, stats) = standardize(&frame(vec![vec![5.0, 5.0, 5.0]]), None).unwrap();
        assert_eq!(z.columns()[0], vec![0.0, 0.0, 0.0]);
        assert_eq!(stats.std, vec![STD_FLOOR]);
        assert_eq!(stats.degenerate, vec!["c0".to_string()]);
    }

    #[test]
    fn supplied_stats_are_not_refitted() {
        let (_, stats) = standardize(&frame(vec![vec![0.0, 2.0]]), None).unwrap();
        let (z, reused) = standardize(&frame(vec![vec![10.0, 12.0]]), Some(&stats)).unwrap();
        assert_eq!(reused, stats);
        assert_eq!(z.columns()[0], vec![9.0, 11.0]);
    }
}
