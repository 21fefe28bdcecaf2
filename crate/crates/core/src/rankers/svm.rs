use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{class_counts, RankVector};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::seed::SeedTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub c: f64,
    /// Fraction of remaining features dropped per round above `batch_above`.
    pub elim_fraction: f64,
    pub batch_above: usize,
    /// Stopping tolerance on the projected-gradient gap.
    pub tol: f64,
    /// Maximum passes over the data. Near-collinear inputs such as raw
    /// wavelengths inside one correlated window can need 10^5 passes.
    pub max_iter: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            elim_fraction: 0.1,
            batch_above: 50,
            tol: 1e-4,
            max_iter: 1_000_000,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.tol > 0.0 && self.max_iter > 0) {
            return Err(Error::validation("SVM C, tolerance and iteration cap must be positive"));
        }
        if !(0.0..1.0).contains(&self.elim_fraction) {
            return Err(Error::validation("SVM elimination fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

/// L2-regularized hinge-loss linear SVM solved by dual coordinate descent.
///
/// The bias is learned as the weight of a constant unit feature. `alpha`
/// holds the dual variables; pass the previous solution to warm start.
/// Coordinates are visited in a fresh pseudo-random order each pass, which
/// is fixed by the data size so results stay reproducible. Bound variables
/// that cannot move are shrunk out of the active set, and convergence is
/// only declared after a pass over the full set meets the tolerance.
pub fn train_linear_svm(
    x: ArrayView2<f64>,
    y: &[u8],
    c: f64,
    tol: f64,
    max_iter: usize,
    alpha: &mut Vec<f64>,
) -> Result<LinearSvm> {
    let (n, d) = x.dim();
    if alpha.len() != n {
        *alpha = vec![0.0; n];
    }
    let sign: Vec<f64> = y.iter().map(|&c| if c == 1 { 1.0 } else { -1.0 }).collect();
    let q_diag: Vec<f64> = x
        .outer_iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0)
        .collect();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for i in 0..n {
        if alpha[i] != 0.0 {
            let s = alpha[i] * sign[i];
            for (wj, xj) in w.iter_mut().zip(x.row(i)) {
                *wj += s * xj;
            }
            b += s;
        }
    }
    let mut rng = SeedTree::new(n as u64).child("svm order").rng();
    let mut index: Vec<usize> = (0..n).collect();
    let mut active = n;
    let mut pg_max_old = f64::INFINITY;
    let mut pg_min_old = f64::NEG_INFINITY;
    for iter in 1..=max_iter {
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        index[..active].shuffle(&mut rng);
        let mut s = 0;
        while s < active {
            let i = index[s];
            let row = x.row(i);
            let margin: f64 = w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + b;
            let g = sign[i] * margin - 1.0;
            // Bound variables whose gradient points outward are parked until
            // the active set looks converged.
            let pg = if alpha[i] == 0.0 {
                if g > pg_max_old {
                    active -= 1;
                    index.swap(s, active);
                    continue;
                }
                g.min(0.0)
            } else if alpha[i] == c {
                if g < pg_min_old {
                    active -= 1;
                    index.swap(s, active);
                    continue;
                }
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / q_diag[i]).clamp(0.0, c);
                let delta = (alpha[i] - old) * sign[i];
                if delta != 0.0 {
                    for (wj, xj) in w.iter_mut().zip(row) {
                        *wj += delta * xj;
                    }
                    b += delta;
                }
            }
            s += 1;
        }
        if pg_max - pg_min < tol || active == 0 {
            if active == n {
                return Ok(LinearSvm {
                    weights: w,
                    bias: b,
                    iterations: iter,
                });
            }
            active = n;
            pg_max_old = f64::INFINITY;
            pg_min_old = f64::NEG_INFINITY;
            continue;
        }
        pg_max_old = if pg_max <= 0.0 { f64::INFINITY } else { pg_max };
        pg_min_old = if pg_min >= 0.0 { f64::NEG_INFINITY } else { pg_min };
    }
    Err(Error::NoConvergence {
        solver: "linear SVM dual coordinate descent",
        iterations: max_iter,
    })
}

/// Column indices in the order SVM-RFE removes them; the last entry is the
/// final survivor.
pub fn svm_rfe_elimination_order(x: &FeatureMatrix, y: &[u8], config: &SvmConfig) -> Result<Vec<usize>> {
    config.validate()?;
    class_counts(x, y)?;
    let mut remaining: Vec<usize> = (0..x.n_features()).collect();
    let mut removed = Vec::with_capacity(remaining.len());
    let mut alpha = Vec::new();
    while remaining.len() > 1 {
        let sub = x.values.select(Axis(1), &remaining);
        let model = train_linear_svm(sub.view(), y, config.c, config.tol, config.max_iter, &mut alpha)?;
        let n_drop = if remaining.len() > config.batch_above {
            ((config.elim_fraction * remaining.len() as f64).floor() as usize).max(1)
        } else {
            1
        }
        .min(remaining.len() - 1);
        // Smallest squared weight first; among ties the later column goes.
        let mut pos: Vec<usize> = (0..remaining.len()).collect();
        pos.sort_by(|&a, &b| {
            let (wa, wb) = (model.weights[a].powi(2), model.weights[b].powi(2));
            wa.total_cmp(&wb).then(remaining[b].cmp(&remaining[a]))
        });
        let mut drop: Vec<usize> = pos[..n_drop].to_vec();
        removed.extend(drop.iter().map(|&p| remaining[p]));
        drop.sort_unstable();
        for p in drop.into_iter().rev() {
            remaining.remove(p);
        }
    }
    removed.extend(remaining);
    Ok(removed)
}

pub fn rank_svm_rfe(x: &FeatureMatrix, y: &[u8], config: &SvmConfig) -> Result<RankVector> {
    let order = svm_rfe_elimination_order(x, y, config)?;
    let n = order.len();
    let mut ranks = vec![0; n];
    for (k, &col) in order.iter().enumerate() {
        ranks[col] = n - k;
    }
    Ok(RankVector {
        feature_names: x.names.clone(),
        ranks,
    })
}
