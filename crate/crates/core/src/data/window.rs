use crate::data::{Label, SeriesFrame};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One-step-ahead supervised windows over a frame.
///
/// Window `i` covers rows `[i, i + W)`; its target is the target channel at
/// row `i + W`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    window_length: usize,
    channels: usize,
    /// `N × W × C`, row-major.
    inputs: Vec<f64>,
    targets: Vec<f64>,
    target_labels: Vec<Label>,
    target_rows: Vec<usize>,
}

pub fn make_windows(
    frame: &SeriesFrame,
    window_length: usize,
    target_channel: &str,
) -> Result<WindowedDataset> {
    let target_idx = frame.channel_index(target_channel)?;
    let rows = frame.len();
    if window_length == 0 || window_length >= rows {
        return Err(Error::Window(format!(
            "window length {window_length} needs 1 ≤ W < {rows} rows"
        )));
    }
    let channels = frame.num_channels();
    let n = rows - window_length;
    let cols = frame.columns();

    let mut inputs = Vec::with_capacity(n * window_length * channels);
    for i in 0..n {
        for r in i..i + window_length {
            inputs.extend(cols.iter().map(|col| col[r]));
        }
    }
    let target_rows: Vec<usize> = (window_length..rows).collect();
    Ok(WindowedDataset {
        window_length,
        channels,
        inputs,
        targets: target_rows.iter().map(|&r| cols[target_idx][r]).collect(),
        target_labels: target_rows.iter().map(|&r| frame.label(r)).collect(),
        target_rows,
    })
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn target_labels(&self) -> &[Label] {
        &self.target_labels
    }

    /// Row of the source frame each target was read from.
    pub fn target_rows(&self) -> &[usize] {
        &self.target_rows
    }

    /// Flat `W × C` values of window `i`.
    pub fn window(&self, i: usize) -> &[f64] {
        let size = self.window_length * self.channels;
        &self.inputs[i * size..][..size]
    }

    pub fn window_tensor(&self, i: usize) -> Tensor {
        Tensor::new(
            vec![self.window_length, self.channels],
            self.window(i).to_vec(),
        )
        .expect("window extent matches shape")
    }

    /// Windows `[start, end)` as a `[B × W × C]` tensor and their targets.
    pub fn batch(&self, start: usize, end: usize) -> (Tensor, Tensor) {
        let size = self.window_length * self.channels;
        let inputs = Tensor::new(
            vec![end - start, self.window_length, self.channels],
            self.inputs[start * size..end * size].to_vec(),
        )
        .expect("batch extent matches shape");
        (inputs, Tensor::vector(self.targets[start..end].to_vec()))
    }

    /// Windows at arbitrary indices, in the given order.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Tensor) {
        let mut inputs = Vec::with_capacity(indices.len() * self.window_length * self.channels);
        for &i in indices {
            inputs.extend_from_slice(self.window(i));
        }
        let inputs = Tensor::new(
            vec![indices.len(), self.window_length, self.channels],
            inputs,
        )
        .expect("gather extent matches shape");
        (
            inputs,
            Tensor::vector(indices.iter().map(|&i| self.targets[i]).collect()),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn frame(len: usize) -> SeriesFrame {
        let ts = (0..len as i64)
            .map(|s| Utc.timestamp_opt(s, 0).unwrap())
            .collect();
        let a: Vec<f64> = (0..len).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..len).map(|i| 100.0 + i as f64).collect();
        let labels = (0..len)
            .map(|i| {
                if i == len - 1 {
                    Label::Anomaly
                } else {
                    Label::Normal
                }
            })
            .collect();
        SeriesFrame::new(ts, vec!["a".into(), "b".into()], vec![a, b], Some(labels)).unwrap()
    }

    #[test]
    fn index_arithmetic() {
        let ds = make_windows(&frame(5), 2, "b").unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.target_rows(), &[2, 3, 4]);
        assert_eq!(ds.targets(), &[102.0, 103.0, 104.0]);
        assert_eq!(ds.window(1), &[1.0, 101.0, 2.0, 102.0]);
        assert_eq!(ds.target_labels()[2], Label::Anomaly);
    }

    #[test]
    fn window_must_be_shorter_than_series() {
        assert!(matches!(
            make_windows(&frame(5), 5, "a"),
            Err(Error::Window(_))
        ));
        assert!(matches!(
            make_windows(&frame(5), 0, "a"),
            Err(Error::Window(_))
        ));
        assert!(matches!(
            make_windows(&frame(5), 2, "zz"),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn batches_are_contiguous_windows() {
        let ds = make_windows(&frame(6), 3, "a").unwrap();
        let (x, y) = ds.batch(1, 3);
        assert_eq!(x.shape(), &[2, 3, 2]);
        assert_eq!(&x.data()[..6], ds.window(1));
        assert_eq!(y.data(), &[4.0, 5.0]);
        assert_eq!(ds.gather(&[2, 0]).1.data(), &[5.0, 3.0]);
    }
}
