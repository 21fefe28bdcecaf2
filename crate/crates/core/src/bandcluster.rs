//! Within-window wavelength selection, clustering into nominal 10/20/40 nm
//! bands, overlap resolution and re-windowing of raw spectra onto bands.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::SpectraTable;
use crate::ensemble::{recursive_ranker_elimination, EliminationTrace, SelectionSettings};
use crate::error::{Error, Result};
use crate::features::{wavelength_label, FeatureMatrix};
use crate::rankers::{run_all, RankerConfig, RankerKind};
use crate::seed::SeedTree;
use crate::windowing::{apply_normalizer, fit_normalizer, Window};

/// Tolerance for wavelength comparisons against window edges.
const EDGE_EPS: f64 = 1e-9;

pub const DEFAULT_WIDTHS: [f64; 3] = [10.0, 20.0, 40.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    #[serde(rename = "center")]
    pub center_nm: f64,
    #[serde(rename = "nominal_width")]
    pub nominal_width_nm: f64,
    #[serde(rename = "lo")]
    pub lo_nm: f64,
    #[serde(rename = "hi")]
    pub hi_nm: f64,
    #[serde(rename = "members")]
    pub member_wavelengths: Vec<f64>,
}

impl Band {
    pub fn name(&self) -> String {
        wavelength_label(self.center_nm)
    }

    /// Open-interval intersection; bands sharing only an endpoint do not
    /// overlap.
    pub fn overlaps(&self, other: &Band) -> bool {
        self.lo_nm < other.hi_nm && other.lo_nm < self.hi_nm
    }
}

/// Measured wavelengths and the sensor limits that clip band windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    pub measured_nm: Vec<f64>,
    pub sensor_lo_nm: f64,
    pub sensor_hi_nm: f64,
    /// Allowed nominal widths, ascending.
    pub widths_nm: Vec<f64>,
}

impl SpectralGrid {
    /// Grid spanning the table's own wavelength range with the default
    /// widths.
    pub fn from_wavelengths(measured_nm: &[f64]) -> Result<Self> {
        let (&lo, &hi) = match (measured_nm.first(), measured_nm.last()) {
            (Some(lo), Some(hi)) => (lo, hi),
            _ => return Err(Error::validation("no measured wavelengths")),
        };
        Ok(SpectralGrid {
            measured_nm: measured_nm.to_vec(),
            sensor_lo_nm: lo,
            sensor_hi_nm: hi,
            widths_nm: DEFAULT_WIDTHS.to_vec(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths_nm.is_empty()
            || self.widths_nm.iter().any(|w| !(*w > 0.0))
            || self.widths_nm.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::validation("band widths must be positive and strictly ascending"));
        }
        if !(self.sensor_lo_nm < self.sensor_hi_nm) {
            return Err(Error::validation("sensor range is empty"));
        }
        Ok(())
    }

    /// Band of nominal `width` around `center`: its members are the measured
    /// wavelengths inside the window clipped to the sensor range.
    pub fn band(&self, center_nm: f64, width_nm: f64) -> Result<Band> {
        let lo_edge = (center_nm - width_nm / 2.0).max(self.sensor_lo_nm);
        let hi_edge = (center_nm + width_nm / 2.0).min(self.sensor_hi_nm);
        let members: Vec<f64> = self
            .measured_nm
            .iter()
            .copied()
            .filter(|&w| w >= lo_edge - EDGE_EPS && w <= hi_edge + EDGE_EPS)
            .collect();
        match (members.first(), members.last()) {
            (Some(&lo_nm), Some(&hi_nm)) => Ok(Band {
                center_nm,
                nominal_width_nm: width_nm,
                lo_nm,
                hi_nm,
                member_wavelengths: members,
            }),
            _ => Err(Error::validation(format!(
                "{width_nm} nm band at {center_nm} nm contains no measured wavelength"
            ))),
        }
    }

    fn smallest_cover(&self, points: &[f64], center: f64) -> Option<f64> {
        let spread = points.iter().map(|p| (p - center).abs()).fold(0.0, f64::max);
        self.widths_nm.iter().copied().find(|w| spread <= w / 2.0 + EDGE_EPS)
    }

    /// Width of the band replacing two overlapping bands. Unequal widths
    /// give the wider one; equal widths keep their width when the centers
    /// are at most half a width apart and otherwise step up to the next
    /// allowed width.
    pub fn merged_width(&self, a: f64, b: f64, center_distance: f64) -> f64 {
        if a != b {
            return a.max(b);
        }
        if center_distance <= a / 2.0 + EDGE_EPS {
            return a;
        }
        self.widths_nm.iter().copied().find(|&w| w > a).unwrap_or(a)
    }
}

/// Greedy clustering of ranked wavelengths (best first). Each candidate is
/// accepted if the running mean of the accepted set plus the candidate can
/// still be covered by an allowed width; rejected candidates are skipped.
pub fn cluster_band(selected: &[f64], grid: &SpectralGrid) -> Result<Band> {
    grid.validate()?;
    let first = *selected
        .first()
        .ok_or_else(|| Error::validation("no wavelengths to cluster"))?;
    if let Some(bad) = selected
        .iter()
        .find(|&&w| w < grid.sensor_lo_nm - EDGE_EPS || w > grid.sensor_hi_nm + EDGE_EPS)
    {
        return Err(Error::validation(format!("selected wavelength {bad} nm is outside the sensor range")));
    }
    let mut accepted = vec![first];
    for &w in &selected[1..] {
        accepted.push(w);
        let center = accepted.iter().sum::<f64>() / accepted.len() as f64;
        if grid.smallest_cover(&accepted, center).is_none() {
            accepted.pop();
        }
    }
    let center = accepted.iter().sum::<f64>() / accepted.len() as f64;
    let width = grid
        .smallest_cover(&accepted, center)
        .expect("accepted set is always coverable");
    grid.band(center, width)
}

/// Merges the leftmost overlapping pair until no two bands overlap. The
/// merged band is centered midway between the pair.
pub fn resolve_overlaps(bands: &[Band], grid: &SpectralGrid) -> Result<Vec<Band>> {
    grid.validate()?;
    let mut out = bands.to_vec();
    loop {
        out.sort_by(|a, b| a.center_nm.total_cmp(&b.center_nm));
        let pair = (0..out.len())
            .flat_map(|i| (i + 1..out.len()).map(move |j| (i, j)))
            .find(|&(i, j)| out[i].overlaps(&out[j]));
        let Some((i, j)) = pair else {
            return Ok(out);
        };
        let (a, b) = (&out[i], &out[j]);
        let center = (a.center_nm + b.center_nm) / 2.0;
        let width = grid.merged_width(a.nominal_width_nm, b.nominal_width_nm, (a.center_nm - b.center_nm).abs());
        log::debug!(
            "merging {} nm ({}) and {} nm ({}) into {} nm ({})",
            a.center_nm,
            a.nominal_width_nm,
            b.center_nm,
            b.nominal_width_nm,
            center,
            width
        );
        let merged = grid.band(center, width)?;
        out.remove(j);
        out[i] = merged;
    }
}

/// Mean reflectance over each band's members, one feature per band named by
/// its center, in center order.
pub fn apply_band_windows(raw: &SpectraTable, bands: &[Band]) -> Result<FeatureMatrix> {
    let mut sorted: Vec<&Band> = bands.iter().collect();
    sorted.sort_by(|a, b| a.center_nm.total_cmp(&b.center_nm));
    let mut values = Array2::<f64>::zeros((raw.n_samples(), sorted.len()));
    for (k, band) in sorted.iter().enumerate() {
        if band.member_wavelengths.is_empty() {
            return Err(Error::validation(format!("band at {} nm has no members", band.center_nm)));
        }
        let cols = band
            .member_wavelengths
            .iter()
            .map(|&w| {
                raw.wavelengths_nm
                    .iter()
                    .position(|&m| (m - w).abs() <= EDGE_EPS)
                    .ok_or_else(|| Error::validation(format!("band member {w} nm is not a measured wavelength")))
            })
            .collect::<Result<Vec<usize>>>()?;
        let mean = raw.reflectance.select(Axis(1), &cols).mean_axis(Axis(1)).expect("non-empty band");
        values.column_mut(k).assign(&mean);
    }
    FeatureMatrix::new(sorted.iter().map(|b| b.name()).collect(), values)
}

/// Outcome of ranking the raw wavelengths inside one correlated window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSelection {
    pub window: Window,
    /// Selected wavelengths, best first.
    pub selected_nm: Vec<f64>,
    /// Absent for single-wavelength windows.
    pub trace: Option<EliminationTrace>,
}

/// Ranks the window's raw wavelengths with every base ranker, runs
/// recursive ranker elimination and returns the winning subset in the
/// winning ensemble's order.
pub fn within_window_selection(
    window: &Window,
    raw: &SpectraTable,
    y: &[u8],
    rankers: &RankerConfig,
    settings: &SelectionSettings,
    seed: SeedTree,
) -> Result<WindowSelection> {
    let cols = &window.member_indices;
    if cols.is_empty() {
        return Err(Error::validation("empty window"));
    }
    if let Some(&bad) = cols.iter().find(|&&c| c >= raw.n_wavelengths()) {
        return Err(Error::validation(format!("window column {bad} is outside the table")));
    }
    if cols.len() == 1 {
        return Ok(WindowSelection {
            window: window.clone(),
            selected_nm: vec![raw.wavelengths_nm[cols[0]]],
            trace: None,
        });
    }
    let sub = raw.select_columns(cols);
    let features = sub.to_features();
    let x = apply_normalizer(&fit_normalizer(&features)?, &features)?;
    let config = RankerConfig {
        seed: seed.child("rankers").seed(),
        ..rankers.clone()
    };
    let rankings = run_all(&RankerKind::ALL, &x, y, &config)?;
    let scorer = settings.scorer(&x, y, seed.child("cv").seed())?;
    let trace = recursive_ranker_elimination(&rankings, &scorer, settings.max_k_for(x.n_features()))?;
    let selected_nm = trace
        .winner
        .features
        .iter()
        .map(|name| {
            let j = x.column_index(name).expect("winner names come from the matrix");
            sub.wavelengths_nm[j]
        })
        .collect();
    Ok(WindowSelection {
        window: window.clone(),
        selected_nm,
        trace: Some(trace),
    })
}
