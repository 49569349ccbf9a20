use std::fmt;
use std::io::{Read, Write};

use crate::detect::Metrics;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub metrics: Metrics,
    pub is_baseline: bool,
}

/// Models ranked by F1 (descending), ties broken by precision.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

/// Undefined metrics rank below every defined value.
fn rank_key(m: Option<f64>) -> f64 {
    m.unwrap_or(f64::NEG_INFINITY)
}

pub fn compare_report(named: &[(String, Metrics)], baseline: Option<(String, Metrics)>) -> Report {
    let mut rows: Vec<ReportRow> = named
        .iter()
        .map(|(name, metrics)| ReportRow {
            name: name.clone(),
            metrics: *metrics,
            is_baseline: false,
        })
        .collect();
    if let Some((name, metrics)) = baseline {
        rows.push(ReportRow {
            name,
            metrics,
            is_baseline: true,
        });
    }
    // Stable sort keeps insertion order for full ties.
    rows.sort_by(|a, b| {
        rank_key(b.metrics.f1)
            .total_cmp(&rank_key(a.metrics.f1))
            .then_with(|| rank_key(b.metrics.precision).total_cmp(&rank_key(a.metrics.precision)))
    });
    Report { rows }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.3}"))
}

impl Report {
    /// `model,precision,recall,f1` at full precision; undefined values are
    /// written as `undefined`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["model", "precision", "recall", "f1"])?;
        let full = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| x.to_string());
        for row in &self.rows {
            wtr.write_record([
                row.name.clone(),
                full(row.metrics.precision),
                full(row.metrics.recall),
                full(row.metrics.f1),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Reads rows written by [`Report::write_csv`].
pub fn read_metrics_csv<R: Read>(reader: R) -> Result<Vec<(String, Metrics)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["model", "precision", "recall", "f1"] {
        return Err(Error::Schema(format!(
            "expected header model,precision,recall,f1, got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let value = |col: usize| -> Result<Option<f64>> {
            match &rec[col] {
                "undefined" => Ok(None),
                s => s.parse().map(Some).map_err(|_| Error::Parse {
                    row: i + 1,
                    column: headers[col].to_string(),
                    value: s.to_string(),
                }),
            }
        };
        let metrics = Metrics {
            precision: value(1)?,
            recall: value(2)?,
            f1: value(3)?,
        };
        rows.push((rec[0].to_string(), metrics));
    }
    Ok(rows)
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .rows
            .iter()
            .map(|r| r.name.len() + 2)
            .max()
            .unwrap_or(5)
            .max(5);
        writeln!(
            f,
            "{:<width$} {:>9} {:>9} {:>9}",
            "model", "precision", "recall", "f1"
        )?;
        for row in &self.rows {
            let name = if row.is_baseline {
                format!("{} *", row.name)
            } else {
                row.name.clone()
            };
            writeln!(
                f,
                "{:<width$} {:>9} {:>9} {:>9}",
                name,
                cell(row.metrics.precision),
                cell(row.metrics.recall),
                cell(row.metrics.f1)
            )?;
        }
        if self.rows.iter().any(|r| r.is_baseline) {
            writeln!(f, "* baseline")?;
        }
        Ok(())
    }
}
