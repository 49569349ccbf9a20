//! The end-to-end pipeline: load → split → standardize → window → train →
//! predict → threshold → classify → score, with every artifact written to
//! the output directory.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use tsad_core::data::{
    generate_synthetic, load_csv, make_windows, split, SeriesFrame, StandardizationStats,
    WindowedDataset,
};
use tsad_core::detect::{
    classify_residuals, compare_report, compute_metrics, confusion_matrix, detection_threshold,
    ConfusionMatrix, DetectionResult, Label, Metrics,
};
use tsad_core::models::{Architecture, Forecaster, ModelOptions, ModelParams, ModelRegistry};
use tsad_core::train::{predict, train, TrainHistory};
use tsad_core::Error;

use crate::config::{ExperimentConfig, SdSource};
use crate::plots::emit_plots;
use crate::RunError;

/// Relative tolerance for the validation-loss plateau.
pub const PLATEAU_TOLERANCE: f64 = 0.05;

/// Marker file left in the output directory when a run fails.
pub const FAILURE_MARKER: &str = "FAILED";

/// Standardized train / validation / test windows.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub stats: StandardizationStats,
    pub rows: SegmentCounts,
    pub train: WindowedDataset,
    pub valid: WindowedDataset,
    pub test: WindowedDataset,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SegmentCounts {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

#[derive(Clone, Debug)]
pub struct Detection {
    pub result: DetectionResult,
    pub truth: Vec<Label>,
    /// Standard deviation the threshold was derived from.
    pub sd: f64,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageTiming {
    pub stage: &'static str,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DetectionSummary {
    pub k: f64,
    pub sd_source: SdSource,
    pub sd: f64,
    pub threshold: f64,
    pub positive_class: Label,
    pub flagged: usize,
    pub labelled_anomalies: usize,
    /// Residuals and threshold are in standardized units of the target.
    pub units: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub preset: String,
    pub architecture: Architecture,
    pub parameter_count: usize,
    pub seed: u64,
    pub rows: SegmentCounts,
    pub windows: SegmentCounts,
    pub detection: DetectionSummary,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub optimizer_steps: usize,
    pub validation_points: usize,
    pub best_step: Option<usize>,
    /// First validation step within 5% of the minimum validation loss.
    pub plateau_step: Option<usize>,
    pub degenerate_channels: Vec<String>,
    pub timings: Vec<StageTiming>,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    pub history: TrainHistory,
    pub detection: Detection,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<SeriesFrame, RunError> {
    match (&cfg.data.csv, &cfg.data.synthetic) {
        (Some(src), None) => load_csv(&src.path, &src.schema).map_err(RunError::at("load")),
        (None, Some(spec)) => {
            let mut spec = spec.clone();
            spec.seed = spec.seed.or(Some(cfg.seed));
            generate_synthetic(&spec).map_err(RunError::at("generate"))
        }
        _ => Err(RunError::Config(
            "exactly one data source is required".into(),
        )),
    }
}

/// Splits chronologically, fits standardization on the training segment
/// only and windows each segment independently.
pub fn prepare(cfg: &ExperimentConfig, frame: &SeriesFrame) -> Result<Prepared, RunError> {
    let parts = split(frame, cfg.split).map_err(RunError::at("split"))?;
    let stats = StandardizationStats::fit(&parts.train).map_err(RunError::at("standardize"))?;
    let apply = |f: &SeriesFrame| stats.apply(f).map_err(RunError::at("standardize"));
    let (train_f, valid_f, test_f) = (
        apply(&parts.train)?,
        apply(&parts.valid)?,
        apply(&parts.test)?,
    );
    let window = |f: &SeriesFrame| {
        make_windows(f, cfg.window_length, &cfg.target_channel).map_err(RunError::at("window"))
    };
    Ok(Prepared {
        rows: SegmentCounts {
            train: parts.train.len(),
            valid: parts.valid.len(),
            test: parts.test.len(),
        },
        train: window(&train_f)?,
        valid: window(&valid_f)?,
        test: window(&test_f)?,
        stats,
    })
}

pub fn build_model(
    cfg: &ExperimentConfig,
    channels: usize,
) -> Result<Box<dyn Forecaster>, RunError> {
    let options = ModelOptions {
        input_channels: channels,
        ..cfg.model.overrides.clone()
    };
    ModelRegistry::builtin()
        .create(&cfg.model.preset, &options)
        .map_err(|e| RunError::Config(e.to_string()))
}

/// Predicts the test segment, thresholds residuals and scores the verdicts
/// against the test labels.
pub fn detect(
    cfg: &ExperimentConfig,
    model: &dyn Forecaster,
    params: &ModelParams,
    data: &Prepared,
) -> Result<Detection, RunError> {
    let preds = predict(model, params, &data.test).map_err(RunError::at("predict"))?;
    let sd_preds = match cfg.detection.sd_source {
        SdSource::Evaluation => preds.clone(),
        SdSource::Validation => {
            predict(model, params, &data.valid).map_err(RunError::at("predict"))?
        }
    };
    let threshold =
        detection_threshold(&sd_preds, cfg.detection.k).map_err(RunError::at("threshold"))?;
    let result = classify_residuals(&preds, data.test.targets(), threshold)
        .map_err(RunError::at("classify"))?;
    let truth = data.test.target_labels().to_vec();
    let confusion = confusion_matrix(
        &result.predicted_labels,
        &truth,
        cfg.detection.positive_class,
    )
    .map_err(RunError::at("evaluate"))?;
    Ok(Detection {
        sd: threshold / cfg.detection.k,
        metrics: compute_metrics(&confusion),
        result,
        truth,
        confusion,
    })
}

/// Runs every stage and writes the artifact bundle. On failure the error is
/// also recorded in a `FAILED` marker next to whatever was already written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, RunError> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| RunError::at("output")(e.into()))?;
    let marker = out.join(FAILURE_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| RunError::at("output")(e.into()))?;
    }
    let result = run_stages(cfg, &out);
    if let Err(e) = &result {
        // Best effort: the original error matters more than a marker failure.
        let _ = fs::write(&marker, format!("stage: {}\nerror: {e}\n", e.stage()));
        log::error!("run failed at stage `{}`: {e}", e.stage());
    }
    result
}

fn run_stages(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary, RunError> {
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |stage: &'static str, timings: &mut Vec<StageTiming>| {
        let seconds = clock.elapsed().as_secs_f64();
        log::info!("{stage}: {seconds:.3}s");
        timings.push(StageTiming { stage, seconds });
        clock = Instant::now();
    };

    let frame = load_data(cfg)?;
    lap("load", &mut timings);
    let data = prepare(cfg, &frame)?;
    write_json(&out.join("stats.json"), &data.stats)?;
    lap("prepare", &mut timings);

    let model = build_model(cfg, frame.num_channels())?;
    let outcome = match train(
        model.as_ref(),
        &cfg.train_config(),
        &data.train,
        &data.valid,
    ) {
        Ok(o) => o,
        Err(Error::Diverged {
            what,
            partial: Some(history),
        }) => {
            write_history(&out.join("history.csv"), &history)?;
            return Err(RunError::at("train")(Error::Diverged {
                what,
                partial: Some(history),
            }));
        }
        Err(e) => return Err(RunError::at("train")(e)),
    };
    write_history(&out.join("history.csv"), &outcome.history)?;
    outcome
        .params
        .save(out.join("params.ckpt"), &model.architecture())
        .map_err(RunError::at("write"))?;
    lap("train", &mut timings);

    let detection = detect(cfg, model.as_ref(), &outcome.params, &data)?;
    write_with(&out.join("detections.csv"), |w| {
        detection.result.write_csv(w, Some(&detection.truth))
    })?;
    let report = compare_report(&[(cfg.model.preset.clone(), detection.metrics)], None);
    write_with(&out.join("metrics.csv"), |w| report.write_csv(w))?;
    lap("detect", &mut timings);

    emit_plots(&outcome.history, &detection.result, &out.join("plots"))
        .map_err(RunError::at("plots"))?;
    lap("plots", &mut timings);

    let history = outcome.history;
    let manifest = Manifest {
        preset: cfg.model.preset.clone(),
        architecture: model.architecture(),
        parameter_count: outcome.params.parameter_count(),
        seed: cfg.seed,
        rows: data.rows,
        windows: SegmentCounts {
            train: data.train.len(),
            valid: data.valid.len(),
            test: data.test.len(),
        },
        detection: DetectionSummary {
            k: cfg.detection.k,
            sd_source: cfg.detection.sd_source,
            sd: detection.sd,
            threshold: detection.result.threshold,
            positive_class: cfg.detection.positive_class,
            flagged: detection.result.anomaly_count(),
            labelled_anomalies: detection
                .truth
                .iter()
                .filter(|&&l| l == Label::Anomaly)
                .count(),
            units: "standardized",
        },
        confusion: detection.confusion,
        metrics: detection.metrics,
        optimizer_steps: history.step_losses.len(),
        validation_points: history.records.len(),
        best_step: history.best().map(|r| r.step),
        plateau_step: history.plateau_step(PLATEAU_TOLERANCE),
        degenerate_channels: data.stats.degenerate.clone(),
        timings,
        config: cfg.clone(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    log::info!(
        "{}: precision {:?} recall {:?} f1 {:?}",
        cfg.model.preset,
        detection.metrics.precision,
        detection.metrics.recall,
        detection.metrics.f1
    );
    Ok(RunSummary {
        output_dir: out.to_path_buf(),
        manifest,
        history,
        detection,
    })
}

pub(crate) fn write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> tsad_core::Result<()>,
) -> Result<(), RunError> {
    let file = File::create(path).map_err(|e| RunError::at("write")(e.into()))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(RunError::at("write"))
}

pub fn write_history(path: &Path, history: &TrainHistory) -> Result<(), RunError> {
    write_with(path, |w| history.write_csv(w))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        Ok(())
    })
}
