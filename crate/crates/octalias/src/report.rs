//! Metric reports and tables on disk.
//!
//! A [`MetricsReport`] is stored as pretty JSON. Tables use the CSV layout
//! `label,psnr_mean,psnr_std,ssim_mean,ssim_std`, one row per report, and
//! spatial-frequency profiles use `bin,log10_magnitude`.

use std::path::Path;

use octalias_core::metrics::MetricsReport;
use serde::{Deserialize, Serialize};

use crate::error::{read_json, write_file, write_json, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
}

impl From<&MetricsReport> for TableRow {
    fn from(r: &MetricsReport) -> Self {
        Self {
            label: r.method_label.clone(),
            psnr_mean: r.psnr_mean,
            psnr_std: r.psnr_std,
            ssim_mean: r.ssim_mean,
            ssim_std: r.ssim_std,
        }
    }
}

pub fn write_report(report: &MetricsReport, path: &Path) -> Result<()> {
    write_json(path, report)
}

pub fn read_report(path: &Path) -> Result<MetricsReport> {
    read_json(path)
}

pub fn encode_table(rows: &[TableRow], origin: &Path) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(origin, e))?;
    }
    w.into_inner().map_err(|e| Error::Data(format!("{}: {e}", origin.display())))
}

pub fn write_table(rows: &[TableRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no rows to write", path.display())));
    }
    write_file(path, &encode_table(rows, path)?)
}

pub fn read_table(path: &Path) -> Result<Vec<TableRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::csv(path, e)))
        .collect()
}

/// Writes a report as JSON, or as a one-row table when `path` ends in `.csv`.
pub fn write_report_auto(report: &MetricsReport, path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        write_table(&[TableRow::from(report)], path)
    } else {
        write_report(report, path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ProfileRow {
    bin: usize,
    log10_magnitude: f64,
}

pub fn write_profile(profile: &[f64], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (bin, &v) in profile.iter().enumerate() {
        w.serialize(ProfileRow { bin, log10_magnitude: v })
            .map_err(|e| Error::csv(path, e))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    write_file(path, &bytes)
}

pub fn read_profile(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize::<ProfileRow>()
        .map(|row| row.map(|p| p.log10_magnitude).map_err(|e| Error::csv(path, e)))
        .collect()
}
