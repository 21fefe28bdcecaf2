use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{class_counts, to_rank_vector, RankVector};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::seed::SeedTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    /// Candidate features per split; `None` means `floor(sqrt(d))`.
    pub max_features: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 500,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_samples_leaf == 0 || self.max_features == Some(0) {
            return Err(Error::validation("forest counts must be positive"));
        }
        Ok(())
    }
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[0] as f64 / n;
    2.0 * p * (1.0 - p)
}

struct Split {
    feature: usize,
    /// Rows sorted by the feature; the left child is `sorted[..at]`.
    sorted: Vec<usize>,
    at: usize,
    decrease: f64,
}

/// Grows one CART tree on a bootstrap sample and accumulates weighted Gini
/// decreases per feature into `importance`.
fn grow_tree(x: ArrayView2<f64>, y: &[u8], config: &ForestConfig, mtry: usize, seed: SeedTree, importance: &mut [f64]) {
    let (n, d) = x.dim();
    let mut rng = seed.rng();
    let root: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let n_root = root.len() as f64;
    let mut stack = vec![root];
    let mut features: Vec<usize> = (0..d).collect();
    let mut pairs: Vec<(f64, usize)> = Vec::new();
    while let Some(node) = stack.pop() {
        let mut counts = [0usize; 2];
        for &i in &node {
            counts[y[i] as usize] += 1;
        }
        let m = node.len();
        if counts[0] == 0 || counts[1] == 0 || m < 2 * config.min_samples_leaf {
            continue;
        }
        let parent = gini(counts);
        features.shuffle(&mut rng);
        let mut best: Option<Split> = None;
        for (tried, &f) in features.iter().enumerate() {
            // Keep drawing beyond mtry only while no valid split exists.
            if tried >= mtry && best.is_some() {
                break;
            }
            pairs.clear();
            pairs.extend(node.iter().map(|&i| (x[[i, f]], i)));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut left = [0usize; 2];
            let mut found: Option<(usize, f64)> = None;
            for k in 1..m {
                left[y[pairs[k - 1].1] as usize] += 1;
                if pairs[k].0 <= pairs[k - 1].0 {
                    continue;
                }
                if k < config.min_samples_leaf || m - k < config.min_samples_leaf {
                    continue;
                }
                let right = [counts[0] - left[0], counts[1] - left[1]];
                let child = (k as f64 * gini(left) + (m - k) as f64 * gini(right)) / m as f64;
                let decrease = parent - child;
                if found.map_or(true, |(_, best_dec)| decrease > best_dec) {
                    found = Some((k, decrease));
                }
            }
            if let Some((at, decrease)) = found {
                if best.as_ref().map_or(true, |b| decrease > b.decrease) {
                    best = Some(Split {
                        feature: f,
                        sorted: pairs.iter().map(|p| p.1).collect(),
                        at,
                        decrease,
                    });
                }
            }
        }
        if let Some(split) = best {
            importance[split.feature] += m as f64 / n_root * split.decrease;
            let mut sorted = split.sorted;
            let right = sorted.split_off(split.at);
            stack.push(right);
            stack.push(sorted);
        }
    }
}

/// Total impurity decrease per feature over all trees, normalized to sum 1
/// (all zeros if no tree ever split).
pub fn forest_importances(x: &FeatureMatrix, y: &[u8], config: &ForestConfig, seed: u64) -> Result<Vec<f64>> {
    config.validate()?;
    class_counts(x, y)?;
    let d = x.n_features();
    let mtry = config
        .max_features
        .unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1))
        .min(d);
    let root = SeedTree::new(seed);
    let per_tree: Vec<Vec<f64>> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut imp = vec![0.0; d];
            grow_tree(x.values.view(), y, config, mtry, root.index(t as u64), &mut imp);
            imp
        })
        .collect();
    let mut total = vec![0.0; d];
    for imp in &per_tree {
        for (t, v) in total.iter_mut().zip(imp) {
            *t += v;
        }
    }
    let sum: f64 = total.iter().sum();
    if sum > 0.0 {
        total.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(total)
}

pub fn rank_random_forest(x: &FeatureMatrix, y: &[u8], config: &ForestConfig, seed: u64) -> Result<RankVector> {
    let imp = forest_importances(x, y, config, seed)?;
    to_rank_vector(&x.names, &imp, true)
}
