use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{KlReport, TlmReport};

use super::tabular::csv_io;

/// One line of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub group: String,
    pub metric: String,
    pub value: f64,
    pub se: Option<f64>,
}

impl ReportRow {
    pub fn new(method: &str, group: &str, metric: &str, value: f64, se: Option<f64>) -> Self {
        ReportRow {
            method: method.to_string(),
            group: group.to_string(),
            metric: metric.to_string(),
            value,
            se,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn push(&mut self, method: &str, group: &str, metric: &str, value: f64, se: Option<f64>) {
        self.rows.push(ReportRow::new(method, group, metric, value, se));
    }

    pub fn extend(&mut self, other: Report) {
        self.rows.extend(other.rows);
    }

    pub fn find(&self, method: &str, group: &str, metric: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.group == group && r.metric == metric)
    }
}

/// Group label used in KL reports.
pub fn group_label(index: usize) -> String {
    format!("g{index:02}")
}

/// One `kl` row per (method, group), averaged over datasets.
impl From<&KlReport> for Report {
    fn from(kl: &KlReport) -> Self {
        let mut r = Report::default();
        for cell in &kl.cells {
            let method = cell.method();
            for g in &kl.groups {
                let (mean, se) = cell.group_summary(g.index);
                r.push(&method, &group_label(g.index), "kl", mean, Some(se));
            }
        }
        r
    }
}

/// Overall KL per method, then averages by design factor level, then the
/// count of failed fits.
pub fn kl_summary(kl: &KlReport) -> Report {
    let mut r = Report::default();
    for cell in &kl.cells {
        r.push(&cell.method(), "all", "kl_mean", cell.mean, Some(cell.se));
    }
    for e in kl.main_effects() {
        r.push(&e.method, &format!("{}={}", e.factor, e.level), "kl_mean", e.mean, None);
    }
    for cell in &kl.cells {
        r.push(&cell.method(), "all", "failed_fits", cell.failures.len() as f64, None);
    }
    r
}

/// Mean TLM over splits for each method, with the standard error of that
/// mean.
pub fn tlm_rows(tlm: &TlmReport, group: &str) -> Report {
    let mut r = Report::default();
    let k = tlm.per_split.len() as f64;
    for (j, m) in tlm.methods.iter().enumerate() {
        r.push(
            m,
            group,
            &format!("tlm[alpha={}]", tlm.alpha),
            tlm.mean[j],
            Some(tlm.sd[j] / k.sqrt()),
        );
    }
    r
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    #[default]
    Json,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

/// Seed and resolved configuration stamped on JSON reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunStamp {
    pub seed: u64,
    pub config: serde_json::Value,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    seed: u64,
    config: &'a serde_json::Value,
    rows: &'a [ReportRow],
}

/// Writes `report` as CSV (`method,group,metric,value,se`) or as JSON with
/// the run stamp alongside the rows.
pub fn emit_report(report: &Report, format: ReportFormat, path: &Path, stamp: &RunStamp) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    match format {
        ReportFormat::Csv => write_report_csv(report, file),
        ReportFormat::Json => {
            let mut file = file;
            let doc = JsonReport {
                seed: stamp.seed,
                config: &stamp.config,
                rows: &report.rows,
            };
            serde_json::to_writer_pretty(&mut file, &doc).map_err(|e| Error::Io(e.into()))?;
            file.write_all(b"\n")?;
            file.flush()?;
            Ok(())
        }
    }
}

pub fn write_report_csv<W: Write>(report: &Report, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "group", "metric", "value", "se"]).map_err(csv_io)?;
    for r in &report.rows {
        let se = r.se.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([&r.method, &r.group, &r.metric, &r.value.to_string(), &se])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}
