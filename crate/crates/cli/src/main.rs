use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tsad_cli::experiment::{build_model, detect, load_data, prepare, write_history, write_json};
use tsad_cli::{exit_code, run_experiment, ExperimentConfig, RunError};
use tsad_core::data::{generate_synthetic, save_csv, LabelVocabulary, SyntheticSpec};
use tsad_core::detect::{
    compare_report, compute_metrics, confusion_matrix, read_detection_labels, read_metrics_csv,
    Label, Metrics,
};
use tsad_core::models::ModelParams;
use tsad_core::train::train;

/// Forecast-residual anomaly detection experiments.
///
/// Log verbosity follows RUST_LOG (default: info).
#[derive(Parser)]
#[command(name = "tsad", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic scenario as CSV.
    Generate {
        /// Synthetic spec as JSON; the built-in scenario when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write params.ckpt, stats.json and history.csv.
    Train(RunArgs),
    /// Score the test segment with a trained checkpoint from `train`.
    Detect(RunArgs),
    /// Confusion matrix and metrics from a detections CSV with a truth column.
    Evaluate {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long, value_enum, default_value_t = Positive::Anomaly)]
        positive: Positive,
        /// Model name used in the metrics CSV.
        #[arg(long, default_value = "model")]
        name: String,
        /// Metrics CSV to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every stage end to end, writing the full artifact bundle.
    Run(RunArgs),
    /// Rank models from metrics CSV files.
    Report {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// Include the published GTA scores (0.740, 0.960, 0.840) as a baseline.
        #[arg(long)]
        gta_baseline: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig, RunError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Positive {
    Anomaly,
    Normal,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

fn io(stage: &'static str) -> impl FnOnce(std::io::Error) -> RunError {
    move |e| RunError::Stage {
        stage,
        source: e.into(),
    }
}

fn core(stage: &'static str) -> impl FnOnce(tsad_core::Error) -> RunError {
    move |source| RunError::Stage { stage, source }
}

fn execute(command: Command) -> Result<(), RunError> {
    match command {
        Command::Generate { spec, seed, out } => {
            let mut spec: SyntheticSpec = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(io("generate"))?;
                    serde_json::from_str(&text)
                        .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?
                }
                None => SyntheticSpec::default(),
            };
            spec.seed = spec.seed.or(Some(seed));
            let frame = generate_synthetic(&spec).map_err(core("generate"))?;
            save_csv(&frame, &out, &LabelVocabulary::default()).map_err(core("write"))?;
            println!(
                "wrote {} rows ({} attack) to {}",
                frame.len(),
                frame.attack_count(),
                out.display()
            );
        }
        Command::Train(args) => {
            let cfg = args.load()?;
            let out = prepare_dir(&cfg.output_dir)?;
            let frame = load_data(&cfg)?;
            let data = prepare(&cfg, &frame)?;
            write_json(&out.join("stats.json"), &data.stats)?;
            let model = build_model(&cfg, frame.num_channels())?;
            let outcome = train(
                model.as_ref(),
                &cfg.train_config(),
                &data.train,
                &data.valid,
            )
            .map_err(core("train"))?;
            write_history(&out.join("history.csv"), &outcome.history)?;
            outcome
                .params
                .save(out.join("params.ckpt"), &model.architecture())
                .map_err(core("write"))?;
            let best = outcome
                .history
                .best()
                .expect("training records at least one validation point");
            println!(
                "best valid loss {:.6} at step {}; checkpoint in {}",
                best.valid_loss,
                best.step,
                out.display()
            );
        }
        Command::Detect(args) => {
            let cfg = args.load()?;
            let out = cfg.output_dir.clone();
            let (arch, params) =
                ModelParams::load(out.join("params.ckpt")).map_err(core("load"))?;
            let model = arch.build().map_err(core("load"))?;
            let frame = load_data(&cfg)?;
            let data = prepare(&cfg, &frame)?;
            let det = detect(&cfg, model.as_ref(), &params, &data)?;
            let file = File::create(out.join("detections.csv")).map_err(io("write"))?;
            det.result
                .write_csv(file, Some(&det.truth))
                .map_err(core("write"))?;
            println!(
                "threshold {:.6}: {} of {} points flagged",
                det.result.threshold,
                det.result.anomaly_count(),
                det.result.len()
            );
        }
        Command::Evaluate {
            detections,
            positive,
            name,
            out,
        } => {
            let file = File::open(&detections).map_err(io("evaluate"))?;
            let (predicted, truth) = read_detection_labels(file).map_err(core("evaluate"))?;
            let truth = truth.ok_or_else(|| {
                RunError::Config(format!("{} has no truth column", detections.display()))
            })?;
            let positive = match positive {
                Positive::Anomaly => Label::Anomaly,
                Positive::Normal => Label::Normal,
            };
            let cm = confusion_matrix(&predicted, &truth, positive).map_err(core("evaluate"))?;
            let metrics = compute_metrics(&cm);
            println!("tp {} fn {} fp {} tn {}", cm.tp, cm.fn_, cm.fp, cm.tn);
            let report = compare_report(&[(name, metrics)], None);
            print!("{report}");
            if let Some(path) = out {
                let file = File::create(&path).map_err(io("write"))?;
                report.write_csv(file).map_err(core("write"))?;
            }
        }
        Command::Run(args) => {
            let summary = run_experiment(&args.load()?)?;
            let m = &summary.manifest;
            print!("{}", compare_report(&[(m.preset.clone(), m.metrics)], None));
            println!("artifacts in {}", summary.output_dir.display());
        }
        Command::Report {
            metrics,
            gta_baseline,
            out,
        } => {
            let mut rows = Vec::new();
            for path in &metrics {
                let file = File::open(path).map_err(io("report"))?;
                rows.extend(read_metrics_csv(file).map_err(core("report"))?);
            }
            let baseline =
                gta_baseline.then(|| ("GTA".to_string(), Metrics::new(0.740, 0.960, 0.840)));
            let report = compare_report(&rows, baseline);
            print!("{report}");
            if let Some(path) = out {
                let file = File::create(&path).map_err(io("write"))?;
                report.write_csv(file).map_err(core("write"))?;
            }
        }
    }
    Ok(())
}

fn prepare_dir(dir: &Path) -> Result<PathBuf, RunError> {
    std::fs::create_dir_all(dir).map_err(io("output"))?;
    Ok(dir.to_path_buf())
}
