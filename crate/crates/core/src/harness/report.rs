//! Result rows and their CSV/JSON renderings.

use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 10] = [
    "experiment",
    "config_hash",
    "m",
    "n",
    "kind",
    "statistic",
    "value",
    "stderr",
    "trials",
    "seed",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRow {
    pub experiment: String,
    pub config_hash: String,
    pub m: usize,
    pub n: usize,
    pub kind: String,
    pub statistic: String,
    pub value: f64,
    /// Zero when the value is exact.
    pub stderr: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::Config(format!("unknown format {s:?} (expected csv or json)"))),
        }
    }
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.config_hash.clone(),
            r.m.to_string(),
            r.n.to_string(),
            r.kind.clone(),
            r.statistic.clone(),
            format_value(r.value),
            format_value(r.stderr),
            r.trials.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    if rdr.headers()?.iter().ne(CSV_COLUMNS) {
        return Err(Error::InvalidSpec("unexpected report header".into()));
    }
    let parse_err = |field: &str| Error::InvalidSpec(format!("cannot parse report field {field:?}"));
    let mut rows = Vec::new();
    for record in rdr.records() {
        let rec = record?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| parse_err(&rec[i]));
        let int = |i: usize| rec[i].parse::<usize>().map_err(|_| parse_err(&rec[i]));
        rows.push(ResultRow {
            experiment: rec[0].to_string(),
            config_hash: rec[1].to_string(),
            m: int(2)?,
            n: int(3)?,
            kind: rec[4].to_string(),
            statistic: rec[5].to_string(),
            value: num(6)?,
            stderr: num(7)?,
            trials: int(8)?,
            seed: rec[9].parse().map_err(|_| parse_err(&rec[9]))?,
        });
    }
    Ok(rows)
}

/// JSON cannot carry NaN or infinities, so those are rejected.
pub fn write_json<W: Write>(rows: &[ResultRow], mut writer: W) -> Result<()> {
    if let Some(r) = rows.iter().find(|r| !r.value.is_finite() || !r.stderr.is_finite()) {
        return Err(Error::NonFinite(format!("report row {}/{}", r.kind, r.statistic)));
    }
    serde_json::to_writer_pretty(&mut writer, rows)?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    Ok(serde_json::from_reader(reader)?)
}

pub fn render(rows: &[ResultRow], format: ReportFormat) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    match format {
        ReportFormat::Csv => write_csv(rows, &mut buf)?,
        ReportFormat::Json => write_json(rows, &mut buf)?,
    }
    Ok(buf)
}

/// Writes the report to `path`, or to stdout when `path` is `None`.
pub fn emit_report(rows: &[ResultRow], format: ReportFormat, path: Option<&Path>) -> Result<()> {
    let bytes = render(rows, format)?;
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    Ok(())
}
