//! Spectra and nitrogen label ingestion, sensor merging, outlier screening
//! and the extreme/inner/middle nitrogen split.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{mean_std, wavelength_label, FeatureMatrix};

/// Reflectance of leaf samples over a strictly ascending wavelength grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectraTable {
    pub sample_ids: Vec<String>,
    pub vine_ids: Vec<String>,
    pub wavelengths_nm: Vec<f64>,
    /// `n_samples x n_wavelengths`.
    pub reflectance: Array2<f64>,
}

impl SpectraTable {
    pub fn new(
        sample_ids: Vec<String>,
        vine_ids: Vec<String>,
        wavelengths_nm: Vec<f64>,
        reflectance: Array2<f64>,
    ) -> Result<Self> {
        let table = SpectraTable {
            sample_ids,
            vine_ids,
            wavelengths_nm,
            reflectance,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.sample_ids.len();
        if self.vine_ids.len() != n || self.reflectance.nrows() != n {
            return Err(Error::validation(format!(
                "row count mismatch: {} sample ids, {} vine ids, {} reflectance rows",
                n,
                self.vine_ids.len(),
                self.reflectance.nrows()
            )));
        }
        if self.reflectance.ncols() != self.wavelengths_nm.len() {
            return Err(Error::validation(format!(
                "{} wavelengths for {} reflectance columns",
                self.wavelengths_nm.len(),
                self.reflectance.ncols()
            )));
        }
        if let Some(&bad) = self.wavelengths_nm.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::validation(format!("wavelength {bad} is not positive")));
        }
        if let Some(w) = self.wavelengths_nm.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::validation(format!(
                "wavelengths not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        if let Some(((r, c), _)) = self.reflectance.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite reflectance for sample {} at {} nm",
                self.sample_ids[r], self.wavelengths_nm[c]
            )));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_wavelengths(&self) -> usize {
        self.wavelengths_nm.len()
    }

    pub fn select_rows(&self, rows: &[usize]) -> SpectraTable {
        SpectraTable {
            sample_ids: rows.iter().map(|&r| self.sample_ids[r].clone()).collect(),
            vine_ids: rows.iter().map(|&r| self.vine_ids[r].clone()).collect(),
            wavelengths_nm: self.wavelengths_nm.clone(),
            reflectance: self.reflectance.select(Axis(0), rows),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> SpectraTable {
        SpectraTable {
            sample_ids: self.sample_ids.clone(),
            vine_ids: self.vine_ids.clone(),
            wavelengths_nm: cols.iter().map(|&c| self.wavelengths_nm[c]).collect(),
            reflectance: self.reflectance.select(Axis(1), cols),
        }
    }

    /// Raw wavelengths as named features.
    pub fn to_features(&self) -> FeatureMatrix {
        FeatureMatrix {
            names: self.wavelengths_nm.iter().map(|&w| wavelength_label(w)).collect(),
            values: self.reflectance.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sample_id".to_string(), "vine_id".to_string()];
        header.extend(self.wavelengths_nm.iter().map(|&w| wavelength_label(w)));
        w.write_record(&header).map_err(csv_write_err)?;
        for (i, row) in self.reflectance.outer_iter().enumerate() {
            let mut rec = vec![self.sample_ids[i].clone(), self.vine_ids[i].clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_write_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn csv_write_err(e: csv::Error) -> Error {
    Error::validation(format!("csv write failed: {e}"))
}

fn csv_parse_err(source_name: &str, e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize);
    Error::Parse {
        source_name: source_name.to_string(),
        row,
        column: None,
        message: e.to_string(),
    }
}

/// Per-vine nitrogen content, % of dry mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NitrogenLabel {
    pub vine_id: String,
    pub nitrogen_pct: f64,
}

/// Nitrogen cut points separating the low / inner-low / middle / inner-high /
/// high regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholds {
    pub low_max: f64,
    pub inner_low_max: f64,
    pub inner_high_min: f64,
    pub high_min: f64,
}

impl Default for ClassThresholds {
    fn default() -> Self {
        ClassThresholds {
            low_max: 2.55,
            inner_low_max: 2.66,
            inner_high_min: 3.35,
            high_min: 3.4,
        }
    }
}

impl ClassThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.low_max, self.inner_low_max, self.inner_high_min, self.high_min]
            .iter()
            .all(|v| v.is_finite())
            && self.low_max < self.inner_low_max
            && self.inner_low_max <= self.inner_high_min
            && self.inner_high_min < self.high_min;
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!("invalid class thresholds {self:?}")))
        }
    }

    /// Region for one nitrogen value. Inequalities follow the threshold table:
    /// `N <= low_max` and `N >= high_min` are extreme, the inner bands are open.
    pub fn region(&self, n: f64) -> Region {
        if n <= self.low_max {
            Region::Extreme(0)
        } else if n >= self.high_min {
            Region::Extreme(1)
        } else if n < self.inner_low_max {
            Region::Inner(0)
        } else if n > self.inner_high_min {
            Region::Inner(1)
        } else {
            Region::Middle
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Extreme(u8),
    Inner(u8),
    Middle,
}

/// Training (extreme) and test (inner) partitions with binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub x_extreme: SpectraTable,
    pub y_extreme: Vec<u8>,
    pub x_inner: SpectraTable,
    pub y_inner: Vec<u8>,
    pub n_excluded_middle: usize,
}

/// Reads a spectra CSV with header `sample_id,vine_id,<nm>,<nm>,...`.
///
/// Wavelength columns are reordered ascending if the file lists them
/// otherwise.
pub fn load_spectra(path: &Path) -> Result<SpectraTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_spectra(file, &path.display().to_string())
}

pub fn read_spectra<R: Read>(input: R, source_name: &str) -> Result<SpectraTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| csv_parse_err(source_name, e))?
        .clone();
    let parse_err = |row: Option<usize>, column: &str, message: String| Error::Parse {
        source_name: source_name.to_string(),
        row,
        column: Some(column.to_string()),
        message,
    };
    for (i, expected) in ["sample_id", "vine_id"].iter().enumerate() {
        match header.get(i) {
            Some(h) if h.trim() == *expected => {}
            Some(h) => {
                return Err(parse_err(None, h, format!("expected `{expected}` as column {}", i + 1)))
            }
            None => return Err(parse_err(None, expected, "missing column".to_string())),
        }
    }
    let mut wavelengths = Vec::with_capacity(header.len().saturating_sub(2));
    for h in header.iter().skip(2) {
        let w: f64 = h
            .trim()
            .parse()
            .map_err(|_| parse_err(None, h, "wavelength column is not numeric".to_string()))?;
        if !(w.is_finite() && w > 0.0) {
            return Err(parse_err(None, h, "wavelength must be positive".to_string()));
        }
        wavelengths.push(w);
    }
    if wavelengths.is_empty() {
        return Err(parse_err(None, "<none>", "no wavelength columns".to_string()));
    }

    let n_w = wavelengths.len();
    let mut sample_ids = Vec::new();
    let mut vine_ids = Vec::new();
    let mut values = Vec::new();
    let mut seen = HashSet::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| csv_parse_err(source_name, e))?;
        if record.len() != n_w + 2 {
            return Err(Error::Parse {
                source_name: source_name.to_string(),
                row: Some(row),
                column: None,
                message: format!("expected {} fields, found {}", n_w + 2, record.len()),
            });
        }
        let sid = record[0].trim().to_string();
        if !seen.insert(sid.clone()) {
            return Err(Error::validation(format!("duplicate sample_id `{sid}`")));
        }
        sample_ids.push(sid);
        vine_ids.push(record[1].trim().to_string());
        for (c, cell) in record.iter().skip(2).enumerate() {
            let v: f64 = cell.trim().parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                parse_err(Some(row), &header[c + 2], format!("invalid reflectance `{cell}`"))
            })?;
            values.push(v);
        }
    }
    let reflectance = Array2::from_shape_vec((sample_ids.len(), n_w), values)
        .expect("row lengths checked above");

    let mut order: Vec<usize> = (0..n_w).collect();
    order.sort_by(|&a, &b| wavelengths[a].total_cmp(&wavelengths[b]));
    if let Some(w) = order.windows(2).find(|w| wavelengths[w[0]] == wavelengths[w[1]]) {
        return Err(parse_err(
            None,
            &header[w[1] + 2],
            "duplicate wavelength column".to_string(),
        ));
    }
    let table = SpectraTable {
        sample_ids,
        vine_ids,
        wavelengths_nm: order.iter().map(|&i| wavelengths[i]).collect(),
        reflectance: reflectance.select(Axis(1), &order),
    };
    table.validate()?;
    Ok(table)
}

/// Reads `vine_id,nitrogen_pct`.
pub fn load_labels(path: &Path) -> Result<Vec<NitrogenLabel>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_labels(file, &path.display().to_string())
}

pub fn read_labels<R: Read>(input: R, source_name: &str) -> Result<Vec<NitrogenLabel>> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| csv_parse_err(source_name, e))?
        .clone();
    for (i, expected) in ["vine_id", "nitrogen_pct"].iter().enumerate() {
        if header.get(i).map(str::trim) != Some(*expected) {
            return Err(Error::Parse {
                source_name: source_name.to_string(),
                row: None,
                column: Some(header.get(i).unwrap_or("<missing>").to_string()),
                message: format!("expected `{expected}`"),
            });
        }
    }
    let mut labels = Vec::new();
    let mut seen = HashSet::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_parse_err(source_name, e))?;
        let vine_id = record.get(0).unwrap_or("").trim().to_string();
        let cell = record.get(1).unwrap_or("");
        let nitrogen_pct: f64 = cell
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v > 0.0)
            .ok_or_else(|| Error::Parse {
                source_name: source_name.to_string(),
                row: Some(r + 1),
                column: Some("nitrogen_pct".to_string()),
                message: format!("invalid nitrogen value `{cell}`"),
            })?;
        if !seen.insert(vine_id.clone()) {
            return Err(Error::validation(format!("duplicate label for vine `{vine_id}`")));
        }
        labels.push(NitrogenLabel {
            vine_id,
            nitrogen_pct,
        });
    }
    Ok(labels)
}

pub fn write_labels<W: Write>(labels: &[NitrogenLabel], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["vine_id", "nitrogen_pct"]).map_err(csv_write_err)?;
    for l in labels {
        w.write_record([l.vine_id.clone(), l.nitrogen_pct.to_string()])
            .map_err(csv_write_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Clips the visible sensor to `[vis_lo_nm, vis_hi_nm]` and appends the NIR
/// sensor columns. Rows are aligned by sample id in the visible table's order.
pub fn merge_sensors(
    vis: &SpectraTable,
    nir: &SpectraTable,
    vis_lo_nm: f64,
    vis_hi_nm: f64,
) -> Result<SpectraTable> {
    if !(vis_lo_nm < vis_hi_nm) {
        return Err(Error::validation(format!(
            "visible clip range [{vis_lo_nm}, {vis_hi_nm}] is empty"
        )));
    }
    let nir_rows: HashMap<&str, usize> = nir
        .sample_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    if nir.n_samples() != vis.n_samples() {
        return Err(Error::validation(format!(
            "sensor tables hold {} and {} samples",
            vis.n_samples(),
            nir.n_samples()
        )));
    }
    let missing: Vec<&str> = vis
        .sample_ids
        .iter()
        .filter(|s| !nir_rows.contains_key(s.as_str()))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(Error::validation(format!(
            "samples missing from NIR table: {}",
            missing.join(", ")
        )));
    }
    let keep: Vec<usize> = vis
        .wavelengths_nm
        .iter()
        .enumerate()
        .filter(|(_, &w)| w >= vis_lo_nm && w <= vis_hi_nm)
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::validation("no visible wavelengths inside the clip range"));
    }
    let vis_max = vis.wavelengths_nm[*keep.last().expect("non-empty")];
    if let Some(&nir_min) = nir.wavelengths_nm.first() {
        if vis_max >= nir_min {
            return Err(Error::validation(format!(
                "clipped visible range ends at {vis_max} nm, overlapping NIR start {nir_min} nm"
            )));
        }
    }

    let order: Vec<usize> = vis
        .sample_ids
        .iter()
        .map(|s| nir_rows[s.as_str()])
        .collect();
    let vis_part = vis.reflectance.select(Axis(1), &keep);
    let nir_part = nir.reflectance.select(Axis(0), &order);
    let reflectance = ndarray::concatenate(Axis(1), &[vis_part.view(), nir_part.view()])
        .expect("row counts match");
    let mut wavelengths: Vec<f64> = keep.iter().map(|&i| vis.wavelengths_nm[i]).collect();
    wavelengths.extend_from_slice(&nir.wavelengths_nm);
    SpectraTable::new(
        vis.sample_ids.clone(),
        vis.vine_ids.clone(),
        wavelengths,
        reflectance,
    )
}

/// Drops every sample holding at least one value farther than
/// `z_threshold` population standard deviations from its wavelength mean.
/// Statistics are computed once, before any removal.
pub fn remove_outliers(table: &SpectraTable, z_threshold: f64) -> Result<(SpectraTable, Vec<String>)> {
    if !(z_threshold > 0.0) {
        return Err(Error::validation(format!("z threshold {z_threshold} must be positive")));
    }
    if table.n_samples() == 0 {
        return Err(Error::validation("cannot screen an empty table"));
    }
    let stats: Vec<(f64, f64)> = table
        .reflectance
        .axis_iter(Axis(1))
        .map(|col| mean_std(col.iter().copied()))
        .collect();
    let mut keep = Vec::new();
    let mut removed = Vec::new();
    for (i, row) in table.reflectance.outer_iter().enumerate() {
        let outlier = row
            .iter()
            .zip(&stats)
            .any(|(&x, &(mu, sd))| (x - mu).abs() > z_threshold * sd);
        if outlier {
            removed.push(table.sample_ids[i].clone());
        } else {
            keep.push(i);
        }
    }
    if keep.is_empty() {
        return Err(Error::validation("outlier screening removed every sample"));
    }
    Ok((table.select_rows(&keep), removed))
}

/// Splits samples into extreme (training), inner (test) and excluded middle
/// strata from their vine's nitrogen value.
pub fn assign_classes(
    table: &SpectraTable,
    labels: &[NitrogenLabel],
    thresholds: &ClassThresholds,
) -> Result<LabeledDataset> {
    thresholds.validate()?;
    let mut by_vine: HashMap<&str, f64> = HashMap::with_capacity(labels.len());
    for l in labels {
        if !(l.nitrogen_pct.is_finite() && l.nitrogen_pct > 0.0) {
            return Err(Error::validation(format!(
                "vine `{}` has invalid nitrogen {}",
                l.vine_id, l.nitrogen_pct
            )));
        }
        if by_vine.insert(l.vine_id.as_str(), l.nitrogen_pct).is_some() {
            return Err(Error::validation(format!("duplicate label for vine `{}`", l.vine_id)));
        }
    }
    let mut missing: Vec<&str> = table
        .vine_ids
        .iter()
        .filter(|v| !by_vine.contains_key(v.as_str()))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        missing.sort_unstable();
        missing.dedup();
        return Err(Error::validation(format!(
            "vines without nitrogen labels: {}",
            missing.join(", ")
        )));
    }

    let (mut ext_rows, mut ext_y, mut inn_rows, mut inn_y) = (vec![], vec![], vec![], vec![]);
    let mut middle = 0;
    for (i, vine) in table.vine_ids.iter().enumerate() {
        match thresholds.region(by_vine[vine.as_str()]) {
            Region::Extreme(c) => {
                ext_rows.push(i);
                ext_y.push(c);
            }
            Region::Inner(c) => {
                inn_rows.push(i);
                inn_y.push(c);
            }
            Region::Middle => middle += 1,
        }
    }
    Ok(LabeledDataset {
        x_extreme: table.select_rows(&ext_rows),
        y_extreme: ext_y,
        x_inner: table.select_rows(&inn_rows),
        y_inner: inn_y,
        n_excluded_middle: middle,
    })
}
