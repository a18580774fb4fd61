//! Plot-ready report files.
//!
//! `csv` writes `queries_hist.csv`, `queries_by_index.csv` and `curves.csv`
//! next to `report.json`; `json` writes `report.json` only. Reals use the
//! shortest representation that parses back to the same bits.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::AggregateReport;
use crate::error::{Error, Result};

pub const REPORT_FILES: [&str; 4] = [
    "queries_hist.csv",
    "queries_by_index.csv",
    "curves.csv",
    "report.json",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidConfig(format!(
                "unknown report format {other:?} (expected csv or json)"
            ))),
        }
    }
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    body(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Writes the report into `dir` (created if missing) and returns the paths
/// written.
pub fn emit(report: &AggregateReport, dir: impl AsRef<Path>, format: ReportFormat) -> Result<Vec<PathBuf>> {
    if report.variants.is_empty() {
        return Err(Error::InvalidConfig("report has no variants".into()));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    if format == ReportFormat::Csv {
        let path = dir.join("queries_hist.csv");
        write_file(&path, |out| {
            writeln!(out, "variant,total_queries,count")?;
            for v in &report.variants {
                for bin in &v.query_histogram {
                    writeln!(out, "{},{},{}", v.variant, bin.total_queries, bin.count)?;
                }
            }
            Ok(())
        })?;
        written.push(path);

        let path = dir.join("queries_by_index.csv");
        write_file(&path, |out| {
            writeln!(out, "variant,stream_index,query_frequency")?;
            for v in &report.variants {
                for (i, freq) in v.queries_by_index.iter().enumerate() {
                    writeln!(out, "{},{},{}", v.variant, i, freq)?;
                }
            }
            Ok(())
        })?;
        written.push(path);

        let path = dir.join("curves.csv");
        write_file(&path, |out| {
            writeln!(out, "variant,query_count,metric,q25,median,q75")?;
            for v in &report.variants {
                for (metric, curve) in [
                    ("decision_accuracy", &v.decision_accuracy),
                    ("macro_f1", &v.macro_f1),
                ] {
                    for p in curve {
                        writeln!(
                            out,
                            "{},{},{},{:?},{:?},{:?}",
                            v.variant, p.query_count, metric, p.q25, p.median, p.q75
                        )?;
                    }
                }
            }
            Ok(())
        })?;
        written.push(path);
    }

    let path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report)?;
    write_file(&path, |out| {
        out.write_all(json.as_bytes())?;
        out.write_all(b"\n")
    })?;
    written.push(path);
    Ok(written)
}

pub fn load_report(dir: impl AsRef<Path>) -> Result<AggregateReport> {
    let path = dir.as_ref().join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}
