//! CSV and JSON-lines emission of metrics records.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use super::runner::{MetricsRecord, ScenarioId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    Jsonl,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "jsonl" => Ok(ReportFormat::Jsonl),
            other => Err(format!("unknown format {other:?}; expected csv or jsonl")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Jsonl => "jsonl",
        })
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no records to report")]
    EmptyReport,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

pub const CSV_COLUMNS: [&str; 10] = [
    "scenario",
    "n_local",
    "switches_per_local",
    "hosts_per_switch",
    "seed",
    "sim_time",
    "requests_served",
    "config_work",
    "config_wall_ms",
    "test_wall_ms",
];

#[derive(Serialize)]
struct CsvRow {
    scenario: ScenarioId,
    n_local: usize,
    switches_per_local: usize,
    hosts_per_switch: usize,
    seed: u64,
    sim_time: u64,
    requests_served: u64,
    config_work: u64,
    config_wall_ms: String,
    test_wall_ms: String,
}

impl From<&MetricsRecord> for CsvRow {
    fn from(r: &MetricsRecord) -> Self {
        Self {
            scenario: r.scenario,
            n_local: r.n_local,
            switches_per_local: r.switches_per_local,
            hosts_per_switch: r.hosts_per_switch,
            seed: r.seed,
            sim_time: r.sim_time,
            requests_served: r.requests_served,
            config_work: r.config_work,
            config_wall_ms: format!("{:.3}", r.config_wall_ms),
            test_wall_ms: format!("{:.3}", r.test_wall_ms),
        }
    }
}

/// Writes a header (CSV only) and one row per record.
pub fn emit_report(records: &[MetricsRecord], format: ReportFormat, out: &mut dyn Write) -> Result<(), ReportError> {
    if records.is_empty() {
        return Err(ReportError::EmptyReport);
    }
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in records {
                w.serialize(CsvRow::from(r))?;
            }
            w.flush()?;
        }
        ReportFormat::Jsonl => {
            for r in records {
                let line = serde_json::to_string(r).expect("record serializes");
                writeln!(out, "{line}")?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

pub fn render_report(records: &[MetricsRecord], format: ReportFormat) -> Result<String, ReportError> {
    let mut buf = Vec::new();
    emit_report(records, format, &mut buf)?;
    Ok(String::from_utf8(buf).expect("reports are UTF-8"))
}

/// Parses records previously written as JSON lines.
pub fn read_jsonl(text: &str) -> Result<Vec<MetricsRecord>, ReportError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| ReportError::Json { line: i + 1, source }))
        .collect()
}
