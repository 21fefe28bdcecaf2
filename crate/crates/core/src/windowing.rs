//! Correlation windows over adjacent wavelengths and training-set
//! z-normalization.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::SpectraTable;
use crate::error::{Error, Result};
use crate::features::{mean_std, wavelength_label, FeatureMatrix};

/// Square Pearson correlation matrix with the feature names it spans.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Array2<f64>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let map = |e: csv::Error| Error::validation(format!("csv write failed: {e}"));
        let mut header = vec![String::new()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(map)?;
        for (i, row) in self.values.outer_iter().enumerate() {
            let mut rec = vec![self.names[i].clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(map)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

/// Pearson correlations between all pairs of columns.
pub fn correlation_matrix(x: &FeatureMatrix) -> Result<CorrelationMatrix> {
    let n = x.n_samples();
    if n < 2 {
        return Err(Error::validation(format!("correlation needs 2+ samples, got {n}")));
    }
    let mut z = x.values.clone();
    for (j, mut col) in z.axis_iter_mut(Axis(1)).enumerate() {
        let (mu, sd) = mean_std(col.iter().copied());
        if !(sd > 0.0) {
            return Err(Error::validation(format!(
                "feature `{}` has zero variance",
                x.names[j]
            )));
        }
        col.mapv_inplace(|v| (v - mu) / sd);
    }
    let mut c = z.t().dot(&z) / n as f64;
    let d = c.nrows();
    for i in 0..d {
        c[[i, i]] = 1.0;
        for j in (i + 1)..d {
            let v = c[[i, j]].clamp(-1.0, 1.0);
            c[[i, j]] = v;
            c[[j, i]] = v;
        }
    }
    Ok(CorrelationMatrix {
        names: x.names.clone(),
        values: c,
    })
}

/// One contiguous run of wavelength columns averaged into a single feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    #[serde(rename = "first")]
    pub first_nm: f64,
    #[serde(rename = "last")]
    pub last_nm: f64,
    #[serde(rename = "midpoint")]
    pub midpoint_nm: f64,
    #[serde(rename = "indices")]
    pub member_indices: Vec<usize>,
}

impl Window {
    pub fn name(&self) -> String {
        wavelength_label(self.midpoint_nm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMap {
    #[serde(rename = "threshold")]
    pub threshold_rho: f64,
    pub windows: Vec<Window>,
}

impl WindowMap {
    pub fn names(&self) -> Vec<String> {
        self.windows.iter().map(Window::name).collect()
    }

    pub fn by_name(&self, name: &str) -> Option<&Window> {
        self.windows.iter().find(|w| w.name() == name)
    }

    pub fn n_columns(&self) -> usize {
        self.windows.iter().map(|w| w.member_indices.len()).sum()
    }
}

/// Greedy left-to-right grouping of adjacent columns. A column joins the
/// open window only if its correlation with every current member exceeds
/// `threshold_rho`; otherwise it opens a new window.
pub fn build_windows(
    corr: &CorrelationMatrix,
    wavelengths_nm: &[f64],
    threshold_rho: f64,
) -> Result<WindowMap> {
    if !(threshold_rho > 0.0 && threshold_rho <= 1.0) {
        return Err(Error::validation(format!(
            "correlation threshold {threshold_rho} outside (0, 1]"
        )));
    }
    if corr.len() != wavelengths_nm.len() || corr.values.ncols() != corr.len() {
        return Err(Error::validation(format!(
            "correlation matrix is {}x{} for {} wavelengths",
            corr.values.nrows(),
            corr.values.ncols(),
            wavelengths_nm.len()
        )));
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for j in 0..wavelengths_nm.len() {
        let joins = !current.is_empty() && current.iter().all(|&m| corr.get(m, j) > threshold_rho);
        if !joins && !current.is_empty() {
            groups.push(std::mem::take(&mut current));
        }
        current.push(j);
    }
    if !current.is_empty() {
        groups.push(current);
    }
    let windows = groups
        .into_iter()
        .map(|idx| {
            let first_nm = wavelengths_nm[idx[0]];
            let last_nm = wavelengths_nm[*idx.last().expect("non-empty window")];
            Window {
                first_nm,
                last_nm,
                midpoint_nm: (first_nm + last_nm) / 2.0,
                member_indices: idx,
            }
        })
        .collect();
    Ok(WindowMap {
        threshold_rho,
        windows,
    })
}

/// Averages each window's member columns. Output features are named by
/// window midpoint, in window order.
pub fn apply_windows(table: &SpectraTable, map: &WindowMap) -> Result<FeatureMatrix> {
    let wl = &table.wavelengths_nm;
    if map.n_columns() != wl.len() {
        return Err(Error::validation(format!(
            "window map covers {} columns, table has {}",
            map.n_columns(),
            wl.len()
        )));
    }
    for w in &map.windows {
        let first = w.member_indices[0];
        let last = *w.member_indices.last().expect("non-empty window");
        if last >= wl.len() || wl[first] != w.first_nm || wl[last] != w.last_nm {
            return Err(Error::validation(format!(
                "window {}-{} nm does not match the table's wavelengths",
                w.first_nm, w.last_nm
            )));
        }
    }
    let n = table.n_samples();
    let mut out = Array2::<f64>::zeros((n, map.windows.len()));
    for (k, w) in map.windows.iter().enumerate() {
        let cols = table.reflectance.select(Axis(1), &w.member_indices);
        let mean = cols.mean_axis(Axis(1)).expect("non-empty window");
        out.column_mut(k).assign(&mean);
    }
    FeatureMatrix::new(map.names(), out)
}

/// Per-feature training mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

pub fn fit_normalizer(x_train: &FeatureMatrix) -> Result<Normalizer> {
    let mut means = Vec::with_capacity(x_train.n_features());
    let mut stds = Vec::with_capacity(x_train.n_features());
    for (j, col) in x_train.values.axis_iter(Axis(1)).enumerate() {
        let (mu, sd) = mean_std(col.iter().copied());
        if !(sd > 0.0) {
            return Err(Error::validation(format!(
                "feature `{}` has zero variance in the training set",
                x_train.names[j]
            )));
        }
        means.push(mu);
        stds.push(sd);
    }
    Ok(Normalizer {
        feature_names: x_train.names.clone(),
        means,
        stds,
    })
}

pub fn apply_normalizer(norm: &Normalizer, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    if norm.feature_names != x.names {
        return Err(Error::validation(
            "feature names differ between normalizer and matrix",
        ));
    }
    let mut values = x.values.clone();
    for (j, mut col) in values.axis_iter_mut(Axis(1)).enumerate() {
        let (mu, sd) = (norm.means[j], norm.stds[j]);
        col.mapv_inplace(|v| (v - mu) / sd);
    }
    FeatureMatrix::new(x.names.clone(), values)
}
