use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::data::SeriesFrame;
use crate::error::{Error, Result};

/// Absorbs representation error in products such as `0.1 × 10`.
const ROUNDING_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitFractions {
    /// Leading share of rows used for training and validation.
    pub train_valid: f64,
    /// Trailing share of the training segment carved out for validation.
    pub valid_of_train: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train_valid: 0.874,
            valid_of_train: 0.1,
        }
    }
}

/// Chronological train / validation / test segments.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: SeriesFrame,
    pub valid: SeriesFrame,
    pub test: SeriesFrame,
    pub train_rows: Range<usize>,
    pub valid_rows: Range<usize>,
    pub test_rows: Range<usize>,
}

/// Segment lengths `(train, valid, test)` for `total` rows.
///
/// The test segment takes `⌊(1 − train_valid)·total⌋` rows; validation takes
/// `⌈valid_of_train·(train + valid)⌉` rows from the end of the remainder.
pub fn split_lengths(total: usize, fractions: SplitFractions) -> Result<(usize, usize, usize)> {
    for (name, f) in [
        ("train_valid", fractions.train_valid),
        ("valid_of_train", fractions.valid_of_train),
    ] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Split(format!(
                "{name} fraction must lie in (0, 1), got {f}"
            )));
        }
    }
    let test = ((1.0 - fractions.train_valid) * total as f64 + ROUNDING_SLACK).floor() as usize;
    let train_valid = total - test.min(total);
    let valid = ((fractions.valid_of_train * train_valid as f64 - ROUNDING_SLACK)
        .ceil()
        .max(0.0) as usize)
        .min(train_valid);
    let train = train_valid - valid;
    if train == 0 || valid == 0 || test == 0 {
        return Err(Error::Split(format!(
            "{total} rows give empty segment (train {train}, valid {valid}, test {test})"
        )));
    }
    Ok((train, valid, test))
}

pub fn split(frame: &SeriesFrame, fractions: SplitFractions) -> Result<Splits> {
    let (train, valid, _) = split_lengths(frame.len(), fractions)?;
    let train_rows = 0..train;
    let valid_rows = train..train + valid;
    let test_rows = train + valid..frame.len();
    Ok(Splits {
        train: frame.slice(train_rows.clone()),
        valid: frame.slice(valid_rows.clone()),
        test: frame.slice(test_rows.clone()),
        train_rows,
        valid_rows,
        test_rows,
    })
}
