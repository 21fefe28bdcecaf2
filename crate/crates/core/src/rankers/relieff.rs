use ndarray::{Array2, Axis};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{class_counts, to_rank_vector, RankVector};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::seed::SeedTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReliefConfig {
    pub k_neighbors: usize,
    /// Number of reference instances; `None` uses every sample once.
    pub n_iterations: Option<usize>,
}

impl Default for ReliefConfig {
    fn default() -> Self {
        ReliefConfig {
            k_neighbors: 10,
            n_iterations: None,
        }
    }
}

impl ReliefConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 || self.n_iterations == Some(0) {
            return Err(Error::validation("ReliefF counts must be positive"));
        }
        Ok(())
    }
}

/// ReliefF feature weights with range-scaled Manhattan distance.
///
/// For each reference instance the `k` nearest hits lower a feature's weight
/// by their mean difference and the `k` nearest misses raise it. With two
/// classes the miss prior factor `P(C) / (1 - P(class(R)))` is exactly 1.
pub fn relieff_weights(x: &FeatureMatrix, y: &[u8], config: &ReliefConfig, seed: u64) -> Result<Vec<f64>> {
    config.validate()?;
    let counts = class_counts(x, y)?;
    let k = config.k_neighbors;
    if let Some(c) = counts.iter().position(|&c| c < k + 1) {
        return Err(Error::validation(format!(
            "class {c} has {} samples; ReliefF with k = {k} needs at least {}",
            counts[c],
            k + 1
        )));
    }
    let n = x.n_samples();
    let d = x.n_features();

    // Scale by feature range so per-feature diffs lie in [0, 1].
    let mut scaled: Array2<f64> = x.values.clone();
    for mut col in scaled.axis_iter_mut(Axis(1)) {
        let (lo, hi) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let range = hi - lo;
        if range > 0.0 {
            col.mapv_inplace(|v| (v - lo) / range);
        } else {
            col.fill(0.0);
        }
    }

    let references: Vec<usize> = match config.n_iterations {
        Some(m) if m < n => {
            let mut idx = sample(&mut SeedTree::new(seed).rng(), n, m).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..n).collect(),
    };
    let m = references.len() as f64;

    let mut weights = vec![0.0; d];
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &r in &references {
        let row_r = scaled.row(r);
        dist.clear();
        for j in (0..n).filter(|&j| j != r) {
            let dj: f64 = row_r
                .iter()
                .zip(scaled.row(j))
                .map(|(a, b)| (a - b).abs())
                .sum();
            dist.push((dj, j));
        }
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let hits = dist.iter().filter(|(_, j)| y[*j] == y[r]).take(k);
        let misses = dist.iter().filter(|(_, j)| y[*j] != y[r]).take(k);
        let scale = 1.0 / (m * k as f64);
        for &(_, h) in hits {
            for (w, (a, b)) in weights.iter_mut().zip(row_r.iter().zip(scaled.row(h))) {
                *w -= (a - b).abs() * scale;
            }
        }
        for &(_, mi) in misses {
            for (w, (a, b)) in weights.iter_mut().zip(row_r.iter().zip(scaled.row(mi))) {
                *w += (a - b).abs() * scale;
            }
        }
    }
    Ok(weights)
}

pub fn rank_relieff(x: &FeatureMatrix, y: &[u8], config: &ReliefConfig, seed: u64) -> Result<RankVector> {
    let w = relieff_weights(x, y, config, seed)?;
    to_rank_vector(&x.names, &w, true)
}
