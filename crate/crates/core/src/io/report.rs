//! Report bundle: CSV tables, reliability SVGs and JSON metadata in one
//! directory. Floats are written with 17 significant digits so every value
//! parses back to the same `f64`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::experiments::{Diagnostics, OodPoint, RejectionPoint, Report, RunConfig};
use crate::metrics::{BinMode, MetricSummary, ReliabilityBin};

use super::checkpoint::ScalerFile;
use super::svg::render_reliability_svg;

pub const METRICS_HEADER: &str = "method,ece,uce,cece,cuce,nll,accuracy";
pub const RELIABILITY_HEADER: &str = "bin,count,mean_stat,outcome_rate";
pub const REJECTION_HEADER: &str = "h_max,retained,retained_fraction,error";
pub const OOD_HEADER: &str = "ood_fraction,ood_count,mean_uncertainty,std_error";

const OOD_NOTE: &str = "each OoD point averages independently drawn batch compositions; ood_repeats gives the count";

/// 17 significant digits in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn metrics_csv(rows: &[(&str, &MetricSummary)]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for (name, m) in rows {
        let vals = [m.ece, m.uce, m.cece, m.cuce, m.nll, m.accuracy].map(fmt_f64);
        s.push_str(&format!("{name},{}\n", vals.join(",")));
    }
    s
}

pub fn reliability_csv(bins: &[ReliabilityBin]) -> String {
    let mut s = format!("{RELIABILITY_HEADER}\n");
    for (i, b) in bins.iter().enumerate() {
        s.push_str(&format!(
            "{i},{},{},{}\n",
            b.count,
            fmt_f64(b.mean_stat),
            fmt_f64(b.outcome_rate)
        ));
    }
    s
}

pub fn rejection_csv(points: &[RejectionPoint]) -> String {
    let mut s = format!("{REJECTION_HEADER}\n");
    for p in points {
        let err = p.error.map(fmt_f64).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{err}\n",
            fmt_f64(p.h_max),
            p.retained,
            fmt_f64(p.retained_fraction)
        ));
    }
    s
}

pub fn ood_csv(points: &[OodPoint]) -> String {
    let mut s = format!("{OOD_HEADER}\n");
    for p in points {
        s.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(p.ood_fraction),
            p.ood_count,
            fmt_f64(p.mean_uncertainty),
            fmt_f64(p.std_error)
        ));
    }
    s
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScalerEntry {
    pub iterations: usize,
    pub converged: bool,
    pub initial_nll: f64,
    pub final_nll: f64,
    #[serde(flatten)]
    pub scaler: ScalerFile,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Metadata {
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub ood_averaging: String,
    pub diagnostics: Diagnostics,
}

pub fn reliability_file(method: &str, mode: BinMode, ext: &str) -> String {
    format!("reliability_{method}_{}.{ext}", mode.name())
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Write every table of `report` into `dir`, creating it if needed. Returns
/// the written paths in a fixed order.
pub fn write_bundle(report: &Report, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let rows: Vec<_> = report.methods.iter().map(|m| (m.method.as_str(), &m.metrics)).collect();
    written.push(write(dir, "metrics.csv", metrics_csv(&rows))?);

    for m in &report.methods {
        for rel in [&m.reliability_confidence, &m.reliability_uncertainty] {
            written.push(write(
                dir,
                &reliability_file(&m.method, rel.mode, "csv"),
                reliability_csv(&rel.bins),
            )?);
            written.push(write(
                dir,
                &reliability_file(&m.method, rel.mode, "svg"),
                render_reliability_svg(rel),
            )?);
        }
        written.push(write(
            dir,
            &format!("rejection_{}.csv", m.method),
            rejection_csv(&m.rejection.points),
        )?);
        written.push(write(dir, &format!("ood_{}.csv", m.method), ood_csv(&m.ood.points))?);
    }

    let scalers: Vec<ScalerEntry> = report
        .scalers
        .iter()
        .map(|f| ScalerEntry {
            iterations: f.iterations,
            converged: f.converged,
            initial_nll: f.initial_nll,
            final_nll: f.final_nll,
            scaler: ScalerFile::from_scaler(&f.scaler),
        })
        .collect();
    let json = serde_json::to_string_pretty(&scalers).expect("scalers serialize");
    written.push(write(dir, "scalers.json", json + "\n")?);

    let meta = Metadata {
        version: report.version.clone(),
        seed: report.config.seed,
        config: report.config.clone(),
        ood_averaging: OOD_NOTE.into(),
        diagnostics: report.diagnostics.clone(),
    };
    let json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    written.push(write(dir, "metadata.json", json + "\n")?);
    Ok(written)
}

fn bad_csv(what: &'static str, reason: impl ToString) -> Error {
    FormatError::Malformed {
        what,
        reason: reason.to_string(),
    }
    .into()
}

/// Split a CSV with the expected header into rows of `width` fields.
fn rows<'a>(text: &'a str, header: &str, what: &'static str) -> Result<Vec<Vec<&'a str>>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        Some(h) => return Err(bad_csv(what, format!("header {h:?}, expected {header:?}"))),
        None => return Err(bad_csv(what, "empty file")),
    }
    let width = header.split(',').count();
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != width {
                return Err(bad_csv(
                    what,
                    format!("line {}: {} fields, expected {width}", i + 2, fields.len()),
                ));
            }
            Ok(fields)
        })
        .collect()
}

fn num<T: std::str::FromStr>(field: &str, what: &'static str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    field.parse().map_err(|e| bad_csv(what, format!("{field:?}: {e}")))
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<(String, MetricSummary)>> {
    const W: &str = "metrics csv";
    rows(text, METRICS_HEADER, W)?
        .into_iter()
        .map(|f| {
            Ok((
                f[0].to_string(),
                MetricSummary {
                    ece: num(f[1], W)?,
                    uce: num(f[2], W)?,
                    cece: num(f[3], W)?,
                    cuce: num(f[4], W)?,
                    nll: num(f[5], W)?,
                    accuracy: num(f[6], W)?,
                },
            ))
        })
        .collect()
}

pub fn parse_reliability_csv(text: &str) -> Result<Vec<ReliabilityBin>> {
    const W: &str = "reliability csv";
    rows(text, RELIABILITY_HEADER, W)?
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            if num::<usize>(f[0], W)? != i {
                return Err(bad_csv(W, format!("bin index {} out of order", f[0])));
            }
            Ok(ReliabilityBin {
                count: num(f[1], W)?,
                mean_stat: num(f[2], W)?,
                outcome_rate: num(f[3], W)?,
            })
        })
        .collect()
}

pub fn parse_rejection_csv(text: &str) -> Result<Vec<RejectionPoint>> {
    const W: &str = "rejection csv";
    rows(text, REJECTION_HEADER, W)?
        .into_iter()
        .map(|f| {
            Ok(RejectionPoint {
                h_max: num(f[0], W)?,
                retained: num(f[1], W)?,
                retained_fraction: num(f[2], W)?,
                error: if f[3].is_empty() { None } else { Some(num(f[3], W)?) },
            })
        })
        .collect()
}

pub fn parse_ood_csv(text: &str) -> Result<Vec<OodPoint>> {
    const W: &str = "ood csv";
    rows(text, OOD_HEADER, W)?
        .into_iter()
        .map(|f| {
            Ok(OodPoint {
                ood_fraction: num(f[0], W)?,
                ood_count: num(f[1], W)?,
                mean_uncertainty: num(f[2], W)?,
                std_error: num(f[3], W)?,
            })
        })
        .collect()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<(String, MetricSummary)>> {
    parse_metrics_csv(&read_text(path.as_ref())?)
}

pub fn read_reliability_csv(path: impl AsRef<Path>) -> Result<Vec<ReliabilityBin>> {
    parse_reliability_csv(&read_text(path.as_ref())?)
}

pub fn read_rejection_csv(path: impl AsRef<Path>) -> Result<Vec<RejectionPoint>> {
    parse_rejection_csv(&read_text(path.as_ref())?)
}

pub fn read_ood_csv(path: impl AsRef<Path>) -> Result<Vec<OodPoint>> {
    parse_ood_csv(&read_text(path.as_ref())?)
}
