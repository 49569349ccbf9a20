//! Mini-batch training with periodic validation and best-checkpoint
//! selection.
//!
//! Batches are split into fixed-size chunks whose gradients are computed in
//! parallel and then summed in chunk order, so results do not depend on the
//! thread count.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::models::{derive_seed, Forecaster, Mode, ModelParams};
use crate::tensor::Tensor;
use crate::train::{adam_step, mse, AdamState};

/// Windows per gradient chunk. Part of the numerical definition of a step:
/// changing it changes summation order.
const GRAD_CHUNK: usize = 32;
const PREDICT_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Optimizer steps between validation passes.
    pub validate_every_steps: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    /// Reshuffle training windows every epoch. Off by default: windows are
    /// visited in time order.
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            validate_every_steps: 50,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            shuffle: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.validate_every_steps == 0 {
            return Err(Error::Parameter(
                "epochs, batch size and validation interval must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        for (name, beta) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Parameter(format!(
                    "adam {name} {beta} outside [0, 1)"
                )));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::Parameter("adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub step: usize,
    pub epoch: usize,
    /// Mean batch loss since the previous record.
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<ValidationRecord>,
    /// Loss of every optimizer step, measured before the update.
    pub step_losses: Vec<f64>,
    pub wall_clock_secs: f64,
    /// Record whose parameters were kept.
    pub best_index: Option<usize>,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&ValidationRecord> {
        self.best_index.map(|i| &self.records[i])
    }

    /// Step of the first record whose validation loss is within `rel_tol`
    /// of the minimum.
    pub fn plateau_step(&self, rel_tol: f64) -> Option<usize> {
        let min = self
            .records
            .iter()
            .map(|r| r.valid_loss)
            .fold(f64::INFINITY, f64::min);
        self.records
            .iter()
            .find(|r| r.valid_loss <= min * (1.0 + rel_tol))
            .map(|r| r.step)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["step", "epoch", "train_loss", "valid_loss"])?;
        for r in &self.records {
            out.write_record([
                r.step.to_string(),
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.valid_loss.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the best validation point.
    pub params: ModelParams,
    pub history: TrainHistory,
}

fn check_dataset(model: &dyn Forecaster, ds: &WindowedDataset, what: &str) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::Parameter(format!("{what} dataset is empty")));
    }
    if ds.channels() != model.input_channels() {
        return Err(Error::dim(
            "dataset channels",
            &[model.input_channels()],
            &[ds.channels()],
        ));
    }
    Ok(())
}

/// Trains `model` from a fresh initialization seeded by `cfg.seed`.
pub fn train(
    model: &dyn Forecaster,
    cfg: &TrainConfig,
    train_ds: &WindowedDataset,
    valid_ds: &WindowedDataset,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_dataset(model, train_ds, "training")?;
    check_dataset(model, valid_ds, "validation")?;
    if train_ds.window_length() != valid_ds.window_length() {
        return Err(Error::dim(
            "window length",
            &[train_ds.window_length()],
            &[valid_ds.window_length()],
        ));
    }

    let started = Instant::now();
    let mut params = model.init_params(cfg.seed);
    let mut state = AdamState::new(&params);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    let mut step = 0usize;
    let mut since_record: Vec<f64> = Vec::new();

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64, u64::MAX));
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = batch_gradient(
                model,
                &params,
                train_ds,
                batch,
                derive_seed(cfg.seed, step as u64, 1),
            )
            .map_err(|e| divergence(e, step + 1, &history))?;
            if !loss.is_finite() {
                let e = Error::Diverged {
                    what: format!("training loss {loss}"),
                    partial: None,
                };
                return Err(divergence(e, step + 1, &history));
            }
            adam_step(&mut params, &grads, &mut state, cfg)
                .map_err(|e| divergence(e, step + 1, &history))?;
            step += 1;
            history.step_losses.push(loss);
            since_record.push(loss);

            if step % cfg.validate_every_steps == 0 {
                record(
                    model,
                    &params,
                    valid_ds,
                    step,
                    epoch,
                    &mut since_record,
                    &mut history,
                    &mut best,
                )
                .map_err(|e| divergence(e, step, &history))?;
            }
        }
        log::debug!("epoch {epoch}: {step} steps");
    }
    if history.records.last().map(|r| r.step) != Some(step) {
        record(
            model,
            &params,
            valid_ds,
            step,
            cfg.epochs,
            &mut since_record,
            &mut history,
            &mut best,
        )
        .map_err(|e| divergence(e, step, &history))?;
    }

    history.wall_clock_secs = started.elapsed().as_secs_f64();
    let (_, params) = best.expect("at least one validation record");
    Ok(TrainOutcome { params, history })
}

/// Attaches the history so far to numerical failures. Debug builds report
/// them from inside the tape as `NonFinite`.
fn divergence(e: Error, step: usize, history: &TrainHistory) -> Error {
    let what = match e {
        Error::Diverged { what, .. } => what,
        Error::NonFinite(op) => format!("non-finite {op}"),
        other => return other,
    };
    Error::Diverged {
        what: format!("{what} at step {step}"),
        partial: Some(Box::new(history.clone())),
    }
}

#[allow(clippy::too_many_arguments)]
fn record(
    model: &dyn Forecaster,
    params: &ModelParams,
    valid_ds: &WindowedDataset,
    step: usize,
    epoch: usize,
    since_record: &mut Vec<f64>,
    history: &mut TrainHistory,
    best: &mut Option<(f64, ModelParams)>,
) -> Result<()> {
    let preds = predict(model, params, valid_ds)?;
    let valid_loss = mse(&preds, valid_ds.targets())?;
    if !valid_loss.is_finite() {
        return Err(Error::Diverged {
            what: format!("validation loss {valid_loss}"),
            partial: None,
        });
    }
    let train_loss = since_record.iter().sum::<f64>() / since_record.len().max(1) as f64;
    since_record.clear();
    log::info!("step {step} (epoch {epoch}): train {train_loss:.6} valid {valid_loss:.6}");
    history.records.push(ValidationRecord {
        step,
        epoch,
        train_loss,
        valid_loss,
    });
    // Strict comparison keeps the earliest of equal minima.
    if best.as_ref().map_or(true, |(b, _)| valid_loss < *b) {
        *best = Some((valid_loss, params.clone()));
        history.best_index = Some(history.records.len() - 1);
    }
    Ok(())
}

/// Mean batch loss and its gradient with respect to every parameter.
fn batch_gradient(
    model: &dyn Forecaster,
    params: &ModelParams,
    ds: &WindowedDataset,
    indices: &[usize],
    step_seed: u64,
) -> Result<(f64, ModelParams)> {
    let total = indices.len() as f64;
    let parts = indices
        .par_chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(c, chunk)| -> Result<(f64, Vec<Tensor>)> {
            let (inputs, targets) = ds.gather(chunk);
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, true);
            let x = tape.constant(inputs);
            let y = tape.constant(targets);
            let mode = Mode::Train {
                seed: derive_seed(step_seed, c as u64, 0),
            };
            let pred = model.forward(&mut tape, &bound, x, mode)?;
            let loss = tape.mse(pred, y)?;
            let loss_value = tape.value(loss).item()?;
            let mut grads = tape.backward(loss)?;
            let weight = chunk.len() as f64 / total;
            let tensors = bound
                .iter()
                .map(|(name, var)| {
                    let shape = params
                        .get(name)
                        .expect("bound from params")
                        .shape()
                        .to_vec();
                    grads.take_or_zeros(var, &shape).map(|g| g * weight)
                })
                .collect();
            Ok((loss_value * weight, tensors))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut loss = 0.0;
    let mut acc: Option<Vec<Tensor>> = None;
    for (l, tensors) in parts {
        loss += l;
        match &mut acc {
            None => acc = Some(tensors),
            Some(acc) => {
                for (a, t) in acc.iter_mut().zip(tensors) {
                    for (x, y) in a.data_mut().iter_mut().zip(t.data()) {
                        *x += y;
                    }
                }
            }
        }
    }
    let mut grads = ModelParams::new();
    // BoundParams iterates in the same sorted order as ModelParams.
    for ((name, _), g) in params.iter().zip(acc.unwrap_or_default()) {
        grads.insert(name, g);
    }
    Ok((loss, grads))
}

/// One-step-ahead predictions for every window, in dataset order.
pub fn predict(
    model: &dyn Forecaster,
    params: &ModelParams,
    ds: &WindowedDataset,
) -> Result<Vec<f64>> {
    check_dataset(model, ds, "prediction")?;
    let starts: Vec<usize> = (0..ds.len()).step_by(PREDICT_CHUNK).collect();
    let parts = starts
        .par_iter()
        .map(|&start| -> Result<Vec<f64>> {
            let end = (start + PREDICT_CHUNK).min(ds.len());
            let (inputs, _) = ds.batch(start, end);
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, false);
            let x = tape.constant(inputs);
            let out = model.forward(&mut tape, &bound, x, Mode::Infer)?;
            Ok(tape.value(out).data().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_windows, SeriesFrame};
    use crate::models::{Tcn, TcnConfig};
    use chrono::{Duration, TimeZone, Utc};

    fn sine_frame(n: usize) -> SeriesFrame {
        let t0 = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let ts = (0..n as i64).map(|i| t0 + Duration::seconds(i)).collect();
        let col = (0..n).map(|i| (i as f64 * 0.2).sin()).collect();
        SeriesFrame::new(ts, vec!["x".into()], vec![col], None).unwrap()
    }

    fn tiny_tcn() -> Tcn {
        Tcn::new(TcnConfig {
            num_blocks: 1,
            filters: 4,
            kernel_length: 3,
            dilations: vec![1],
            padding: Default::default(),
            input_channels: 1,
        })
        .unwrap()
    }

    #[test]
    fn validation_cadence_includes_final_step() {
        // 120 windows, batch 1: records at 50, 100 and the final 120.
        let ds = make_windows(&sine_frame(128), 8, "x").unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let out = train(&tiny_tcn(), &cfg, &ds, &ds).unwrap();
        let steps: Vec<_> = out.history.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![50, 100, 120]);
        assert_eq!(out.history.step_losses.len(), 120);
    }

    #[test]
    fn partial_last_batch_is_kept() {
        let ds = make_windows(&sine_frame(108), 8, "x").unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 32,
            ..TrainConfig::default()
        };
        let out = train(&tiny_tcn(), &cfg, &ds, &ds).unwrap();
        // 100 windows → 4 batches per epoch.
        assert_eq!(out.history.step_losses.len(), 8);
        assert_eq!(out.history.records.last().unwrap().epoch, 2);
    }

    #[test]
    fn best_parameters_match_best_record() {
        let ds = make_windows(&sine_frame(200), 8, "x").unwrap();
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 16,
            validate_every_steps: 10,
            ..TrainConfig::default()
        };
        let model = tiny_tcn();
        let out = train(&model, &cfg, &ds, &ds).unwrap();
        let best = out.history.best().unwrap();
        let min = out
            .history
            .records
            .iter()
            .map(|r| r.valid_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(best.valid_loss, min);
        let preds = predict(&model, &out.params, &ds).unwrap();
        assert_eq!(mse(&preds, ds.targets()).unwrap(), best.valid_loss);
    }

    #[test]
    fn identical_seeds_are_bitwise_reproducible() {
        let ds = make_windows(&sine_frame(150), 8, "x").unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 40,
            shuffle: true,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = train(&tiny_tcn(), &cfg, &ds, &ds).unwrap();
        let b = train(&tiny_tcn(), &cfg, &ds, &ds).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history.records, b.history.records);
    }

    #[test]
    fn plateau_is_first_record_near_minimum() {
        let rec = |step, valid_loss| ValidationRecord {
            step,
            epoch: 1,
            train_loss: 0.0,
            valid_loss,
        };
        let h = TrainHistory {
            records: vec![rec(50, 1.0), rec(100, 0.104), rec(150, 0.1), rec(200, 0.2)],
            ..TrainHistory::default()
        };
        assert_eq!(h.plateau_step(0.05), Some(100));
        assert_eq!(h.plateau_step(0.0), Some(150));
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainHistory {
            records: vec![ValidationRecord {
                step: 50,
                epoch: 1,
                train_loss: 0.5,
                valid_loss: 0.25,
            }],
            ..TrainHistory::default()
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "step,epoch,train_loss,valid_loss\n50,1,0.5,0.25\n"
        );
    }

    #[test]
    fn zero_epochs_and_channel_mismatch_are_rejected() {
        let ds = make_windows(&sine_frame(50), 8, "x").unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&tiny_tcn(), &cfg, &ds, &ds),
            Err(Error::Parameter(_))
        ));
        let wide = Tcn::new(TcnConfig {
            input_channels: 2,
            ..tiny_tcn().config().clone()
        })
        .unwrap();
        assert!(matches!(
            train(&wide, &TrainConfig::default(), &ds, &ds),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn exploding_learning_rate_reports_divergence() {
        let t0 = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let n = 100;
        let ts = (0..n as i64).map(|i| t0 + Duration::seconds(i)).collect();
        let col = (0..n)
            .map(|i| if i % 2 == 0 { 1e300 } else { -1e300 })
            .collect();
        let frame = SeriesFrame::new(ts, vec!["x".into()], vec![col], None).unwrap();
        let ds = make_windows(&frame, 4, "x").unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let err = train(&tiny_tcn(), &cfg, &ds, &ds).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Diverged {
                    partial: Some(_),
                    ..
                }
            ),
            "{err}"
        );
    }
}
