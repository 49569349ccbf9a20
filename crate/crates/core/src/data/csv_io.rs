//! CSV ingestion and export.
//!
//! Files carry a header row, RFC-4180 quoting and ISO-8601 timestamps. Label
//! strings are matched case-sensitively against a [`LabelVocabulary`].

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::data::{Label, SeriesFrame};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVocabulary {
    pub normal: String,
    pub attack: String,
}

impl Default for LabelVocabulary {
    fn default() -> Self {
        Self {
            normal: "Normal".into(),
            attack: "Attack".into(),
        }
    }
}

impl LabelVocabulary {
    fn parse(&self, s: &str) -> Option<Label> {
        if s == self.normal {
            Some(Label::Normal)
        } else if s == self.attack {
            Some(Label::Anomaly)
        } else {
            None
        }
    }

    fn name(&self, label: Label) -> &str {
        match label {
            Label::Normal => &self.normal,
            Label::Anomaly => &self.attack,
        }
    }
}

/// Which columns to read and how to interpret them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    #[serde(default = "default_time_column")]
    pub time_column: String,
    pub channels: Vec<String>,
    #[serde(default)]
    pub label_column: Option<String>,
    #[serde(default)]
    pub vocabulary: LabelVocabulary,
}

fn default_time_column() -> String {
    "time".into()
}

impl CsvSchema {
    pub fn new(channels: &[&str], label_column: Option<&str>) -> Self {
        Self {
            time_column: default_time_column(),
            channels: channels.iter().map(|s| s.to_string()).collect(),
            label_column: label_column.map(str::to_string),
            vocabulary: LabelVocabulary::default(),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<SeriesFrame> {
    read_csv(File::open(path)?, schema)
}

/// Reads a frame, extracting the schema's channels in schema order.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<SeriesFrame> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let time_idx = find(&schema.time_column)?;
    let channel_idx = schema
        .channels
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    let label_idx = schema.label_column.as_deref().map(find).transpose()?;

    let mut timestamps = Vec::new();
    let mut columns = vec![Vec::new(); channel_idx.len()];
    let mut labels = label_idx.map(|_| Vec::new());

    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("").trim();

        let ts_raw = field(time_idx);
        let ts = parse_timestamp(ts_raw).ok_or_else(|| Error::Parse {
            row,
            column: schema.time_column.clone(),
            value: ts_raw.to_string(),
        })?;
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                return Err(Error::Ordering { row });
            }
        }
        timestamps.push(ts);

        for ((col, &i), name) in columns.iter_mut().zip(&channel_idx).zip(&schema.channels) {
            let raw = field(i);
            let v: f64 = raw
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row,
                    column: name.clone(),
                    value: raw.to_string(),
                })?;
            col.push(v);
        }

        if let (Some(i), Some(out)) = (label_idx, labels.as_mut()) {
            let raw = field(i);
            let label = schema.vocabulary.parse(raw).ok_or_else(|| Error::Label {
                row,
                value: raw.to_string(),
            })?;
            out.push(label);
        }
    }

    SeriesFrame::new(timestamps, schema.channels.clone(), columns, labels)
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
        .map(|n| n.and_utc())
}

/// Writes `time,<channels...>[,label]`. Values use the shortest decimal that
/// reads back to the identical `f64`.
pub fn write_csv<W: Write>(
    frame: &SeriesFrame,
    writer: W,
    vocabulary: &LabelVocabulary,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string()];
    header.extend(frame.channel_names().iter().cloned());
    if frame.labels().is_some() {
        header.push("label".into());
    }
    wtr.write_record(&header)?;

    let mut record = Vec::with_capacity(header.len());
    for row in 0..frame.len() {
        record.clear();
        record.push(frame.timestamps()[row].to_rfc3339_opts(SecondsFormat::AutoSi, true));
        for col in frame.columns() {
            record.push(format!("{}", col[row]));
        }
        if let Some(labels) = frame.labels() {
            record.push(vocabulary.name(labels[row]).to_string());
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_csv(
    frame: &SeriesFrame,
    path: impl AsRef<Path>,
    vocabulary: &LabelVocabulary,
) -> Result<()> {
    write_csv(frame, File::create(path)?, vocabulary)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "\
time,LIT301,AIT301,AIT302,label
2019-07-20T04:30:00Z,521.5,8.4,301.2,Normal
2019-07-20T04:30:01Z,522.25,8.41,\"301.0\",Normal
2019-07-20T04:30:02.5Z,523.0,8.39,300.8,Attack
";

    fn schema() -> CsvSchema {
        CsvSchema::new(&["LIT301", "AIT301", "AIT302"], Some("label"))
    }

    #[test]
    fn reads_fixture() {
        let frame = read_csv(FIXTURE.as_bytes(), &schema()).unwrap();
        assert_eq!(frame.len(), 3);
        assert_eq!(frame.num_channels(), 3);
        assert_eq!(frame.column("LIT301").unwrap(), &[521.5, 522.25, 523.0]);
        assert_eq!(frame.column("AIT302").unwrap()[1], 301.0);
        assert_eq!(
            frame.labels().unwrap(),
            &[Label::Normal, Label::Normal, Label::Anomaly]
        );
    }

    #[test]
    fn selects_channels_in_schema_order() {
        let s = CsvSchema::new(&["AIT302", "LIT301"], None);
        let frame = read_csv(FIXTURE.as_bytes(), &s).unwrap();
        assert_eq!(frame.channel_names(), &["AIT302", "LIT301"]);
        assert!(frame.labels().is_none());
    }

    #[test]
    fn missing_column_is_named() {
        let s = CsvSchema::new(&["LIT301", "FIT401"], Some("label"));
        let err = read_csv(FIXTURE.as_bytes(), &s).unwrap_err();
        assert!(
            matches!(&err, Error::MissingColumn(c) if c == "FIT401"),
            "{err}"
        );
    }

    #[test]
    fn unknown_label_reports_row() {
        let bad = FIXTURE.replace("Attack", "attack");
        let err = read_csv(bad.as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, Error::Label { row: 2, .. }), "{err}");
    }

    #[test]
    fn non_monotone_timestamps_are_rejected() {
        let bad = FIXTURE.replace("04:30:02.5Z", "04:29:59Z");
        assert!(matches!(
            read_csv(bad.as_bytes(), &schema()),
            Err(Error::Ordering { row: 2 })
        ));
    }

    #[test]
    fn unparseable_numbers_are_rejected() {
        let bad = FIXTURE.replace("8.41", "n/a");
        assert!(matches!(
            read_csv(bad.as_bytes(), &schema()),
            Err(Error::Parse { row: 1, .. })
        ));
    }

    #[test]
    fn export_reads_back_identically() {
        let frame = read_csv(FIXTURE.as_bytes(), &schema()).unwrap();
        let mut buf = Vec::new();
        write_csv(&frame, &mut buf, &LabelVocabulary::default()).unwrap();
        let back = read_csv(buf.as_slice(), &schema()).unwrap();
        assert_eq!(back, frame);
    }
}
