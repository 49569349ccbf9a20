//! Loss-curve and prediction plots as plain SVG, each with a CSV twin
//! holding exactly the plotted values.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use tsad_core::detect::{DetectionResult, Label};
use tsad_core::train::TrainHistory;
use tsad_core::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 48.0;

struct Series<'a> {
    name: &'a str,
    color: &'a str,
    points: Vec<(f64, f64)>,
}

/// Writes `loss.svg`/`loss.csv` and `predictions.svg`/`predictions.csv`
/// into `dir`, returning every path written.
pub fn emit_plots(
    history: &TrainHistory,
    detection: &DetectionResult,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    if history.records.is_empty() {
        return Err(Error::Parameter(
            "cannot plot an empty training history".into(),
        ));
    }
    if detection.is_empty() {
        return Err(Error::Parameter(
            "cannot plot an empty detection result".into(),
        ));
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let mut csv = String::from("step,train_loss,valid_loss\n");
    for r in &history.records {
        writeln!(csv, "{},{},{}", r.step, r.train_loss, r.valid_loss).unwrap();
    }
    let step = |f: fn(&tsad_core::train::ValidationRecord) -> f64| {
        history
            .records
            .iter()
            .map(|r| (r.step as f64, f(r)))
            .collect()
    };
    let svg = render(
        "Loss",
        &[
            Series {
                name: "train",
                color: "#1f77b4",
                points: step(|r| r.train_loss),
            },
            Series {
                name: "valid",
                color: "#ff7f0e",
                points: step(|r| r.valid_loss),
            },
        ],
        &[],
    );
    written.extend(write_pair(dir, "loss", &svg, &csv)?);

    let mut csv = String::from("index,prediction,actual,flagged\n");
    for i in 0..detection.len() {
        let flagged = detection.predicted_labels[i] == Label::Anomaly;
        writeln!(
            csv,
            "{i},{},{},{}",
            detection.predictions[i], detection.actuals[i], flagged as u8
        )
        .unwrap();
    }
    let indexed = |v: &[f64]| v.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect();
    let markers: Vec<(f64, f64)> = (0..detection.len())
        .filter(|&i| detection.predicted_labels[i] == Label::Anomaly)
        .map(|i| (i as f64, detection.actuals[i]))
        .collect();
    let svg = render(
        "Prediction vs actual",
        &[
            Series {
                name: "actual",
                color: "#7f7f7f",
                points: indexed(&detection.actuals),
            },
            Series {
                name: "prediction",
                color: "#2ca02c",
                points: indexed(&detection.predictions),
            },
        ],
        &markers,
    );
    written.extend(write_pair(dir, "predictions", &svg, &csv)?);
    Ok(written)
}

fn write_pair(dir: &Path, stem: &str, svg: &str, csv: &str) -> Result<[PathBuf; 2]> {
    let svg_path = dir.join(format!("{stem}.svg"));
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::write(&svg_path, svg)?;
    fs::write(&csv_path, csv)?;
    Ok([svg_path, csv_path])
}

fn render(title: &str, series: &[Series<'_>], markers: &[(f64, f64)]) -> String {
    let all = series.iter().flat_map(|s| s.points.iter()).chain(markers);
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    // Degenerate ranges still need a non-zero span to map onto.
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{title}</text>"#,
        WIDTH / 2.0
    )
    .unwrap();
    writeln!(
        out,
        r#"<polyline fill="none" stroke="black" points="{m},{t} {m},{b} {r},{b}"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    )
    .unwrap();
    for (label, y) in [(y1, MARGIN), (y0, HEIGHT - MARGIN)] {
        writeln!(
            out,
            r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="10" text-anchor="end">{label:.3}</text>"#,
            MARGIN - 4.0
        )
        .unwrap();
    }
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
            s.color,
            pts.join(" ")
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{}">{}</text>"#,
            WIDTH - MARGIN - 90.0,
            MARGIN + 14.0 * i as f64,
            s.color,
            s.name
        )
        .unwrap();
    }
    for &(x, y) in markers {
        writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#d62728"/>"##,
            sx(x),
            sy(y)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}
