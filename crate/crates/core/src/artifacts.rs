//! Files written at the end of a run: the JSON report, CSV tables for
//! external plotting and a small SVG of the selected bands.
//!
//! Every file is written to a temporary sibling first and renamed into
//! place, so a rerun into the same directory never leaves a torn file.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::bandcluster::Band;
use crate::error::{Error, Result};
use crate::pipeline::Report;

pub const REPORT_JSON: &str = "report.json";
pub const HEATMAP_CSV: &str = "rankings_heatmap.csv";
pub const BAND_HEATMAP_CSV: &str = "rankings_heatmap_bands.csv";
pub const CORRELATION_CSV: &str = "correlation_matrix.csv";
pub const BANDS_JSON: &str = "bands.json";
pub const BANDS_SVG: &str = "bands.svg";
pub const WINDOW_TRACE_CSV: &str = "elimination_windows.csv";
pub const BAND_TRACE_CSV: &str = "elimination_bands.csv";
pub const WINDOW_BANDS_CSV: &str = "window_bands.csv";
pub const COMPARISON_CSV: &str = "comparison.csv";

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::validation(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Writes every artifact of `report` into `out_dir`, creating it if needed,
/// and returns the paths written.
pub fn emit_artifacts(report: &Report, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files: Vec<(&str, Vec<u8>)> = vec![
        (REPORT_JSON, report.to_json()?.into_bytes()),
        (HEATMAP_CSV, csv_bytes(|b| report.window_stage.write_heatmap_csv(b))?),
        (BAND_HEATMAP_CSV, csv_bytes(|b| report.band_stage.write_heatmap_csv(b))?),
        (BANDS_JSON, serde_json::to_string_pretty(&report.selected_bands)?.into_bytes()),
        (BANDS_SVG, bands_svg(&report.selected_bands, spectral_extent(report)).into_bytes()),
        (WINDOW_TRACE_CSV, csv_bytes(|b| report.window_stage.trace.write_csv(b))?),
        (BAND_TRACE_CSV, csv_bytes(|b| report.band_stage.trace.write_csv(b))?),
        (WINDOW_BANDS_CSV, csv_bytes(|b| report.write_window_bands_csv(b))?),
        (COMPARISON_CSV, csv_bytes(|b| report.write_comparison_csv(b))?),
    ];
    if let Some(corr) = &report.correlation {
        files.push((CORRELATION_CSV, csv_bytes(|b| corr.write_csv(b))?));
    }
    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = out_dir.join(name);
        write_atomic(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

fn spectral_extent(report: &Report) -> (f64, f64) {
    let w = &report.windows.windows;
    match (w.first(), w.last()) {
        (Some(a), Some(b)) => (a.first_nm, b.last_nm),
        _ => (400.0, 1700.0),
    }
}

const SVG_WIDTH: f64 = 900.0;
const SVG_HEIGHT: f64 = 140.0;
const MARGIN: f64 = 40.0;
const AXIS_Y: f64 = 100.0;

/// Spectral axis over `extent` with one shaded rectangle per band spanning
/// its measured range.
pub fn bands_svg(bands: &[Band], extent: (f64, f64)) -> String {
    let lo = extent.0.min(bands.iter().map(|b| b.lo_nm).fold(f64::INFINITY, f64::min));
    let hi = extent.1.max(bands.iter().map(|b| b.hi_nm).fold(f64::NEG_INFINITY, f64::max));
    let span = (hi - lo).max(1.0);
    let x = |nm: f64| MARGIN + (nm - lo) / span * (SVG_WIDTH - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for b in bands {
        let (x0, x1) = (x(b.lo_nm), x(b.hi_nm));
        let _ = writeln!(
            s,
            r##"<rect class="band" x="{:.2}" y="20" width="{:.2}" height="{}" fill="#2a9d8f" fill-opacity="0.45"><title>{} nm ({} - {} nm)</title></rect>"##,
            x0,
            (x1 - x0).max(1.0),
            AXIS_Y - 20.0,
            b.name(),
            b.lo_nm,
            b.hi_nm
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="14" font-size="10" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            b.name()
        );
    }
    let _ = writeln!(
        s,
        r##"<line class="axis" x1="{MARGIN}" y1="{AXIS_Y}" x2="{}" y2="{AXIS_Y}" stroke="#000000"/>"##,
        SVG_WIDTH - MARGIN
    );
    let first_tick = (lo / 100.0).ceil() as i64 * 100;
    let mut tick = first_tick;
    while (tick as f64) <= hi {
        let tx = x(tick as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{tx:.2}" y1="{AXIS_Y}" x2="{tx:.2}" y2="{}" stroke="#000000"/><text x="{tx:.2}" y="{}" font-size="10" text-anchor="middle">{tick}</text>"##,
            AXIS_Y + 5.0,
            AXIS_Y + 17.0
        );
        tick += 100;
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">Wavelength (nm)</text>"#,
        SVG_WIDTH / 2.0,
        SVG_HEIGHT - 4.0
    );
    s.push_str("</svg>\n");
    s
}
