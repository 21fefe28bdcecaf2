//! Synthetic leaf spectra with planted nitrogen-sensitive bands.
//!
//! Each leaf is a smooth baseline of broad Gaussian bumps whose amplitudes
//! vary from leaf to leaf, plus a nitrogen response in the planted bands and
//! AR(1) noise along the wavelength axis. The shared bump variation is what
//! makes long runs of neighbouring wavelengths correlate above 0.99, as in
//! real leaf spectra.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{merge_sensors, NitrogenLabel, SpectraTable};
use crate::error::{Error, Result};
use crate::seed::SeedTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorGrid {
    pub lo_nm: f64,
    pub hi_nm: f64,
    pub step_nm: f64,
}

impl SensorGrid {
    pub fn wavelengths(&self) -> Vec<f64> {
        let n = ((self.hi_nm - self.lo_nm) / self.step_nm + 1e-9).floor() as usize + 1;
        // Rounded to 0.001 nm so labels and CSV round trips stay exact.
        (0..n)
            .map(|i| ((self.lo_nm + i as f64 * self.step_nm) * 1000.0).round() / 1000.0)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedBand {
    pub center_nm: f64,
    /// Full width at half maximum of the Gaussian response.
    pub width_nm: f64,
    /// Reflectance change per percentage point of nitrogen at the center.
    pub effect_size: f64,
}

/// Baseline component; `amplitude` is its mean height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center_nm: f64,
    pub width_nm: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_vines: usize,
    pub leaves_per_vine: usize,
    /// One grid per simulated sensor, in ascending spectral order.
    pub sensors: Vec<SensorGrid>,
    pub informative_bands: Vec<PlantedBand>,
    pub baseline: Vec<Bump>,
    /// Leaf-to-leaf relative standard deviation of each bump amplitude.
    pub baseline_jitter: f64,
    pub ar_coefficient: f64,
    /// Innovation standard deviation of the AR(1) noise.
    pub noise_sigma: f64,
    pub nitrogen_range: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_vines: 150,
            leaves_per_vine: 20,
            sensors: vec![
                SensorGrid { lo_nm: 390.0, hi_nm: 910.0, step_nm: 0.4 },
                SensorGrid { lo_nm: 936.0, hi_nm: 1656.0, step_nm: 6.0 },
            ],
            informative_bands: vec![
                PlantedBand { center_nm: 550.0, width_nm: 20.0, effect_size: 0.01 },
                PlantedBand { center_nm: 980.0, width_nm: 30.0, effect_size: 0.01 },
                PlantedBand { center_nm: 1450.0, width_nm: 40.0, effect_size: 0.01 },
            ],
            baseline: vec![
                Bump { center_nm: 420.0, width_nm: 120.0, amplitude: 0.06 },
                Bump { center_nm: 555.0, width_nm: 90.0, amplitude: 0.10 },
                Bump { center_nm: 680.0, width_nm: 80.0, amplitude: 0.05 },
                Bump { center_nm: 850.0, width_nm: 200.0, amplitude: 0.45 },
                Bump { center_nm: 1100.0, width_nm: 260.0, amplitude: 0.40 },
                Bump { center_nm: 1300.0, width_nm: 160.0, amplitude: 0.30 },
                Bump { center_nm: 1600.0, width_nm: 220.0, amplitude: 0.35 },
                // Leaf pigment variation at the informative features that is
                // unrelated to nitrogen.
                Bump { center_nm: 550.0, width_nm: 20.0, amplitude: 0.045 },
                Bump { center_nm: 980.0, width_nm: 30.0, amplitude: 0.045 },
                Bump { center_nm: 1450.0, width_nm: 40.0, amplitude: 0.045 },
            ],
            baseline_jitter: 0.08,
            ar_coefficient: 0.995,
            noise_sigma: 0.0001,
            nitrogen_range: (2.3, 3.7),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_vines == 0 || self.leaves_per_vine == 0 {
            return Err(Error::validation("synthetic vine and leaf counts must be positive"));
        }
        if self.sensors.is_empty() {
            return Err(Error::validation("at least one sensor grid is required"));
        }
        let mut prev_hi = f64::NEG_INFINITY;
        for s in &self.sensors {
            if !(s.step_nm > 0.0 && s.lo_nm > 0.0 && s.lo_nm <= s.hi_nm && s.lo_nm > prev_hi) {
                return Err(Error::validation(format!(
                    "sensor grid {}-{} nm step {} is invalid or overlaps the previous one",
                    s.lo_nm, s.hi_nm, s.step_nm
                )));
            }
            prev_hi = s.hi_nm;
        }
        let (lo, hi) = (self.sensors[0].lo_nm, prev_hi);
        for b in &self.informative_bands {
            if !(b.center_nm >= lo && b.center_nm <= hi && b.width_nm > 0.0 && b.effect_size.is_finite()) {
                return Err(Error::validation(format!(
                    "informative band at {} nm is outside {lo}-{hi} nm or malformed",
                    b.center_nm
                )));
            }
        }
        if self.baseline.iter().any(|b| !(b.width_nm > 0.0 && b.amplitude.is_finite())) {
            return Err(Error::validation("baseline bumps need positive widths"));
        }
        if !(0.0..1.0).contains(&self.ar_coefficient) {
            return Err(Error::validation("AR coefficient must lie in [0, 1)"));
        }
        if !(self.noise_sigma > 0.0) || !(self.baseline_jitter >= 0.0) {
            return Err(Error::validation("noise sigma must be positive and jitter non-negative"));
        }
        let (nlo, nhi) = self.nitrogen_range;
        if !(nlo > 0.0 && nlo < nhi) {
            return Err(Error::validation("nitrogen range must be positive and increasing"));
        }
        Ok(())
    }

    fn midrange(&self) -> f64 {
        (self.nitrogen_range.0 + self.nitrogen_range.1) / 2.0
    }
}

fn gaussian(wl: f64, center: f64, fwhm: f64) -> f64 {
    let sigma = fwhm / (2.0 * (2.0 * 2f64.ln()).sqrt());
    (-0.5 * ((wl - center) / sigma).powi(2)).exp()
}

/// One table per sensor grid plus one label per vine. Every table holds the
/// same samples in the same order.
pub fn generate_sensors(config: &SynthConfig) -> Result<(Vec<SpectraTable>, Vec<NitrogenLabel>)> {
    config.validate()?;
    let grids: Vec<Vec<f64>> = config.sensors.iter().map(SensorGrid::wavelengths).collect();
    let all_wl: Vec<f64> = grids.iter().flatten().copied().collect();
    let bumps: Vec<Vec<f64>> = config
        .baseline
        .iter()
        .map(|b| all_wl.iter().map(|&w| gaussian(w, b.center_nm, b.width_nm)).collect())
        .collect();
    let response: Vec<f64> = all_wl
        .iter()
        .map(|&w| {
            config
                .informative_bands
                .iter()
                .map(|b| b.effect_size * gaussian(w, b.center_nm, b.width_nm))
                .sum()
        })
        .collect();
    let mid = config.midrange();
    let tree = SeedTree::new(config.seed).child("vines");

    let vines: Vec<(f64, Vec<Vec<f64>>)> = (0..config.n_vines)
        .into_par_iter()
        .map(|v| {
            let mut rng = tree.index(v as u64).rng();
            let nitrogen = rng.gen_range(config.nitrogen_range.0..config.nitrogen_range.1);
            let leaves = (0..config.leaves_per_vine)
                .map(|_| {
                    let mut row = vec![0.0; all_wl.len()];
                    for (b, profile) in config.baseline.iter().zip(&bumps) {
                        let z: f64 = rng.sample(StandardNormal);
                        let amp = b.amplitude * (1.0 + config.baseline_jitter * z);
                        for (r, p) in row.iter_mut().zip(profile) {
                            *r += amp * p;
                        }
                    }
                    for (r, s) in row.iter_mut().zip(&response) {
                        *r += s * (nitrogen - mid);
                    }
                    // Independent AR(1) chain per sensor, started stationary.
                    let phi = config.ar_coefficient;
                    let stationary = config.noise_sigma / (1.0 - phi * phi).sqrt();
                    let mut start = 0;
                    for g in &grids {
                        let mut e = stationary * rng.sample::<f64, _>(StandardNormal);
                        for r in &mut row[start..start + g.len()] {
                            *r += e;
                            e = phi * e + config.noise_sigma * rng.sample::<f64, _>(StandardNormal);
                        }
                        start += g.len();
                    }
                    row
                })
                .collect();
            (nitrogen, leaves)
        })
        .collect();

    let n = config.n_vines * config.leaves_per_vine;
    let mut sample_ids = Vec::with_capacity(n);
    let mut vine_ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(config.n_vines);
    let mut values = Array2::<f64>::zeros((n, all_wl.len()));
    for (v, (nitrogen, leaves)) in vines.into_iter().enumerate() {
        let vine = format!("V{:03}", v + 1);
        labels.push(NitrogenLabel {
            vine_id: vine.clone(),
            nitrogen_pct: (nitrogen * 1e4).round() / 1e4,
        });
        for (l, leaf) in leaves.into_iter().enumerate() {
            let i = v * config.leaves_per_vine + l;
            values.row_mut(i).assign(&ndarray::Array1::from(leaf));
            sample_ids.push(format!("{vine}-L{:02}", l + 1));
            vine_ids.push(vine.clone());
        }
    }
    let mut tables = Vec::with_capacity(grids.len());
    let mut start = 0;
    for g in grids {
        let cols: Vec<usize> = (start..start + g.len()).collect();
        start += g.len();
        tables.push(SpectraTable::new(
            sample_ids.clone(),
            vine_ids.clone(),
            g,
            values.select(ndarray::Axis(1), &cols),
        )?);
    }
    Ok((tables, labels))
}

/// All sensors side by side, unclipped.
pub fn generate(config: &SynthConfig) -> Result<(SpectraTable, Vec<NitrogenLabel>)> {
    let (tables, labels) = generate_sensors(config)?;
    let mut merged = tables[0].clone();
    for t in &tables[1..] {
        let lo = merged.wavelengths_nm[0];
        let hi = *merged.wavelengths_nm.last().expect("non-empty grid");
        merged = merge_sensors(&merged, t, lo, hi)?;
    }
    Ok((merged, labels))
}
