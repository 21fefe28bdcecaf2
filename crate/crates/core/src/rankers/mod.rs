//! Six base rankers behind one interface. Each consumes a normalized feature
//! matrix, binary labels and a seed, and returns a full ranking.

mod anova;
mod ccsa;
mod forest;
mod lasso;
mod relieff;
mod svm;

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::seed::SeedTree;

pub use anova::{anova_f, rank_select_k_best};
pub use ccsa::{ccsa_search, rank_ccsa, CcsaConfig, CcsaOutcome};
pub use forest::{forest_importances, rank_random_forest, ForestConfig};
pub use lasso::{lambda_grid, lasso_path, rank_lasso, LassoConfig};
pub use relieff::{rank_relieff, relieff_weights, ReliefConfig};
pub use svm::{rank_svm_rfe, svm_rfe_elimination_order, train_linear_svm, LinearSvm, SvmConfig};

/// A ranking of every feature; rank 1 is the most informative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankVector {
    pub feature_names: Vec<String>,
    /// Parallel to `feature_names`.
    pub ranks: Vec<usize>,
}

impl RankVector {
    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.ranks[i])
    }

    /// Column indices from best to worst.
    pub fn order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.ranks.len()).collect();
        idx.sort_by_key(|&i| self.ranks[i]);
        idx
    }

    /// Feature names from best to worst.
    pub fn ordered_names(&self) -> Vec<String> {
        self.order()
            .into_iter()
            .map(|i| self.feature_names[i].clone())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.feature_names.len();
        let mut seen = vec![false; n];
        if self.ranks.len() != n {
            return Err(Error::validation("rank vector length mismatch"));
        }
        for &r in &self.ranks {
            if r == 0 || r > n || std::mem::replace(&mut seen[r - 1], true) {
                return Err(Error::validation(format!(
                    "ranks are not a permutation of 1..{n}"
                )));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let map = |e: csv::Error| Error::validation(format!("csv write failed: {e}"));
        w.write_record(["feature", "rank"]).map_err(map)?;
        for (name, rank) in self.feature_names.iter().zip(&self.ranks) {
            w.write_record([name.as_str(), &rank.to_string()]).map_err(map)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

/// Dense ranks from scores. Ties keep the original column order; NaN scores
/// rank last.
pub fn to_rank_vector(names: &[String], scores: &[f64], descending: bool) -> Result<RankVector> {
    if names.len() != scores.len() {
        return Err(Error::validation(format!(
            "{} names for {} scores",
            names.len(),
            scores.len()
        )));
    }
    let mut seen = HashSet::with_capacity(names.len());
    if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
        return Err(Error::validation(format!("duplicate feature name `{dup}`")));
    }
    let key = |i: usize| {
        let s = scores[i];
        if s.is_nan() {
            f64::INFINITY
        } else if descending {
            -s
        } else {
            s
        }
    };
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    let mut ranks = vec![0; scores.len()];
    for (pos, &i) in idx.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    Ok(RankVector {
        feature_names: names.to_vec(),
        ranks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RankerKind {
    SelectKBest,
    ReliefF,
    SvmRfe,
    Ccsa,
    Lasso,
    RandomForest,
}

impl RankerKind {
    pub const ALL: [RankerKind; 6] = [
        RankerKind::SelectKBest,
        RankerKind::ReliefF,
        RankerKind::SvmRfe,
        RankerKind::Ccsa,
        RankerKind::Lasso,
        RankerKind::RandomForest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RankerKind::SelectKBest => "SelectKBest",
            RankerKind::ReliefF => "ReliefF",
            RankerKind::SvmRfe => "SVM-RFE",
            RankerKind::Ccsa => "CCSA",
            RankerKind::Lasso => "LASSO",
            RankerKind::RandomForest => "Random Forest",
        }
    }
}

/// Hyperparameters for all six rankers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankerConfig {
    pub relieff: ReliefConfig,
    pub svm: SvmConfig,
    pub ccsa: CcsaConfig,
    pub lasso: LassoConfig,
    pub forest: ForestConfig,
    pub seed: u64,
}

impl Default for RankerConfig {
    fn default() -> Self {
        RankerConfig {
            relieff: ReliefConfig::default(),
            svm: SvmConfig::default(),
            ccsa: CcsaConfig::default(),
            lasso: LassoConfig::default(),
            forest: ForestConfig::default(),
            seed: 0,
        }
    }
}

impl RankerConfig {
    pub fn validate(&self) -> Result<()> {
        self.relieff.validate()?;
        self.svm.validate()?;
        self.ccsa.validate()?;
        self.lasso.validate()?;
        self.forest.validate()
    }
}

/// Runs one ranker with a seed derived from `config.seed` and the ranker's
/// name.
pub fn run_ranker(
    kind: RankerKind,
    x: &FeatureMatrix,
    y: &[u8],
    config: &RankerConfig,
) -> Result<RankVector> {
    let seed = SeedTree::new(config.seed).child(kind.name());
    let rv = match kind {
        RankerKind::SelectKBest => rank_select_k_best(x, y)?,
        RankerKind::ReliefF => rank_relieff(x, y, &config.relieff, seed.seed())?,
        RankerKind::SvmRfe => rank_svm_rfe(x, y, &config.svm)?,
        RankerKind::Ccsa => rank_ccsa(x, y, &config.ccsa, seed.seed())?,
        RankerKind::Lasso => {
            let grid = lambda_grid(x, y, &config.lasso)?;
            rank_lasso(x, y, &grid, &config.lasso)?
        }
        RankerKind::RandomForest => rank_random_forest(x, y, &config.forest, seed.seed())?,
    };
    debug_assert!(rv.validate().is_ok());
    Ok(rv)
}

/// Runs every ranker in `kinds`, possibly concurrently. Seeds depend only on
/// ranker names, so the result does not depend on scheduling.
pub fn run_all(
    kinds: &[RankerKind],
    x: &FeatureMatrix,
    y: &[u8],
    config: &RankerConfig,
) -> Result<Vec<(String, RankVector)>> {
    kinds
        .par_iter()
        .map(|&k| {
            log::debug!("ranking {} features with {}", x.n_features(), k.name());
            run_ranker(k, x, y, config).map(|rv| (k.name().to_string(), rv))
        })
        .collect()
}

/// Shared precondition: labels are 0/1, parallel to rows, both classes present.
pub(crate) fn class_counts(x: &FeatureMatrix, y: &[u8]) -> Result<[usize; 2]> {
    let counts = crate::classify::check_labels(y, x.n_samples())?;
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::validation("both classes must be present"));
    }
    if x.n_features() == 0 {
        return Err(Error::validation("no features to rank"));
    }
    Ok(counts)
}
