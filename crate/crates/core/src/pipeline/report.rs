//! Per-scan reconstruction error tables and UV error heatmaps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::raster::{save_png, write_rfr1, PngEncoding, Raster, UvRasterizer};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub subject: String,
    pub scan: String,
    pub template: f64,
    pub personalized: f64,
    pub swapped: Option<f64>,
}

pub const CSV_HEADER: &str = "subject,scan,template,personalized,swapped";

/// CSV text with one row per scan; a missing swapped value is left empty.
pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let swapped = r.swapped.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", r.subject, r.scan, r.template, r.personalized, swapped);
    }
    out
}

pub fn write_report_csv(rows: &[ReportRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, report_csv(rows)).map_err(|e| Error::io(path, e))
}

/// Column means of template, personalized and swapped errors.
pub fn column_means(rows: &[ReportRow]) -> (f64, f64, Option<f64>) {
    let n = rows.len().max(1) as f64;
    let t = rows.iter().map(|r| r.template).sum::<f64>() / n;
    let p = rows.iter().map(|r| r.personalized).sum::<f64>() / n;
    let s: Option<Vec<f64>> = rows.iter().map(|r| r.swapped).collect();
    (t, p, s.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64))
}

/// Per-vertex errors interpolated over the UV layout.
pub fn error_heatmap(mesh: &Mesh, per_vertex: &[f64], resolution: usize) -> Result<Raster> {
    UvRasterizer::new(mesh, resolution, resolution)?.rasterize(per_vertex, 1)
}

/// Writes `<stem>.rfr1` with raw errors and `<stem>.png` scaled so that
/// `max_error` maps to white. A zero `max_error` gives a black image.
pub fn write_heatmap(heatmap: &Raster, max_error: f64, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
    let dir = dir.as_ref();
    write_rfr1(heatmap, dir.join(format!("{stem}.rfr1")))?;
    let scale = if max_error > 0.0 { (1.0 / max_error) as f32 } else { 0.0 };
    save_png(heatmap, dir.join(format!("{stem}.png")), PngEncoding::Linear, false, scale)
}
