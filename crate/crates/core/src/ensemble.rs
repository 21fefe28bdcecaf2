//! Rank aggregation, nested-subset evaluation and recursive ranker
//! elimination.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{stratified_folds, CvEngine, CvResult, DEFAULT_SHRINKAGE};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::rankers::{to_rank_vector, RankVector};

/// Mean CV F1 plus the fraction of features left out.
pub fn fitness(f1_mean: f64, subset_size: usize, total_features: usize) -> f64 {
    f1_mean + (1.0 - subset_size as f64 / total_features as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetEvaluation {
    pub features: Vec<String>,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub fitness: f64,
}

impl SubsetEvaluation {
    pub fn size(&self) -> usize {
        self.features.len()
    }
}

/// Mean rank per feature; lower is better, ties by column order.
pub fn aggregate_ranks(vectors: &[RankVector]) -> Result<RankVector> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::validation("no rankings to aggregate"))?;
    if let Some(bad) = vectors.iter().find(|v| v.feature_names != first.feature_names) {
        return Err(Error::validation(format!(
            "rankings cover different features ({} vs {})",
            first.len(),
            bad.len()
        )));
    }
    let m = vectors.len() as f64;
    let scores: Vec<f64> = (0..first.len())
        .map(|j| vectors.iter().map(|v| v.ranks[j] as f64).sum::<f64>() / m)
        .collect();
    to_rank_vector(&first.feature_names, &scores, false)
}

/// Cross-validated QDA scoring of column subsets over one stage's features,
/// with a cache keyed by the sorted column set. Counts nested sweeps so the
/// cost of an elimination run can be audited.
pub struct SubsetScorer {
    names: Vec<String>,
    engine: CvEngine,
    cache: Mutex<HashMap<Vec<usize>, CvResult>>,
    sweeps: AtomicUsize,
    /// Feature count the smallness term is measured against.
    reference_size: usize,
}

impl SubsetScorer {
    pub fn new(x: &FeatureMatrix, y: &[u8], folds: usize, cv_seed: u64, shrinkage: f64) -> Result<Self> {
        let plan = stratified_folds(y, folds, cv_seed)?;
        Ok(SubsetScorer {
            names: x.names.clone(),
            engine: CvEngine::new(x.values.view(), y, plan, shrinkage)?,
            cache: Mutex::new(HashMap::new()),
            sweeps: AtomicUsize::new(0),
            reference_size: x.n_features(),
        })
    }

    /// Measures subset size against `n` features instead of this stage's
    /// own count, so later stages with few candidates are not pushed toward
    /// a single feature. `n` must be at least the stage's feature count.
    pub fn with_reference_size(mut self, n: usize) -> Result<Self> {
        if n < self.n_features() {
            return Err(Error::validation(format!(
                "reference size {n} is below the stage's {} features",
                self.n_features()
            )));
        }
        self.reference_size = n;
        Ok(self)
    }

    pub fn reference_size(&self) -> usize {
        self.reference_size
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.names
    }

    /// Number of nested-subset sweeps run so far.
    pub fn sweeps(&self) -> usize {
        self.sweeps.load(Ordering::Relaxed)
    }

    pub fn evaluate(&self, columns: &[usize]) -> Result<SubsetEvaluation> {
        let mut key = columns.to_vec();
        key.sort_unstable();
        let cached = self.cache.lock().expect("cache poisoned").get(&key).cloned();
        let cv = match cached {
            Some(cv) => cv,
            None => {
                let cv = self.engine.evaluate(&key)?;
                self.cache.lock().expect("cache poisoned").insert(key, cv.clone());
                cv
            }
        };
        Ok(SubsetEvaluation {
            features: columns.iter().map(|&j| self.names[j].clone()).collect(),
            f1_mean: cv.f1_mean,
            f1_std: cv.f1_std,
            fitness: fitness(cv.f1_mean, columns.len(), self.reference_size),
        })
    }

    /// Best top-k prefix of `ranking` for k in 1..=max_k; ties go to the
    /// smaller k.
    pub fn best_prefix(&self, ranking: &RankVector, max_k: usize) -> Result<SubsetEvaluation> {
        if ranking.feature_names != self.names {
            return Err(Error::validation("ranking does not match the scorer's features"));
        }
        if max_k == 0 || max_k > self.n_features() {
            return Err(Error::validation(format!(
                "max_k must lie in 1..={}, got {max_k}",
                self.n_features()
            )));
        }
        self.sweeps.fetch_add(1, Ordering::Relaxed);
        let order = ranking.order();
        let evals = (1..=max_k)
            .into_par_iter()
            .map(|k| self.evaluate(&order[..k]))
            .collect::<Result<Vec<_>>>()?;
        let mut best = 0;
        for (k, e) in evals.iter().enumerate() {
            if e.fitness > evals[best].fitness {
                best = k;
            }
        }
        Ok(evals.into_iter().nth(best).expect("max_k >= 1"))
    }
}

/// Cross-validation settings for one selection stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionSettings {
    pub cv_folds: usize,
    /// Largest prefix tried in nested sweeps; `None` tries every feature.
    pub max_k: Option<usize>,
    pub shrinkage: f64,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        SelectionSettings {
            cv_folds: 10,
            max_k: None,
            shrinkage: DEFAULT_SHRINKAGE,
        }
    }
}

impl SelectionSettings {
    pub fn validate(&self) -> Result<()> {
        if self.cv_folds < 2 || self.max_k == Some(0) || !(self.shrinkage >= 0.0) {
            return Err(Error::validation(
                "selection needs at least 2 folds, a positive max_k and non-negative shrinkage",
            ));
        }
        Ok(())
    }

    /// `max_k` clamped to the number of available features.
    pub fn max_k_for(&self, n_features: usize) -> usize {
        self.max_k.map_or(n_features, |k| k.min(n_features))
    }

    pub fn scorer(&self, x: &FeatureMatrix, y: &[u8], cv_seed: u64) -> Result<SubsetScorer> {
        self.validate()?;
        SubsetScorer::new(x, y, self.cv_folds, cv_seed, self.shrinkage)
    }
}

/// Sweeps the top-k prefixes of `ranking` with 10-fold stratified QDA.
pub fn evaluate_nested_subsets(
    ranking: &RankVector,
    x: &FeatureMatrix,
    y: &[u8],
    cv_seed: u64,
    max_k: usize,
) -> Result<SubsetEvaluation> {
    let scorer = SubsetScorer::new(x, y, 10, cv_seed, DEFAULT_SHRINKAGE)?;
    scorer.best_prefix(ranking, max_k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationRound {
    /// Ranker names, sorted.
    pub members: Vec<String>,
    pub best: SubsetEvaluation,
    /// Ranker dropped on the way to the next round.
    pub eliminated: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationTrace {
    pub rounds: Vec<EliminationRound>,
    pub winner: SubsetEvaluation,
    pub winner_members: Vec<String>,
    /// Aggregate ranking of the winning ensemble.
    pub winner_ranking: RankVector,
}

impl EliminationTrace {
    /// One row per round: ensemble size, remaining rankers, subset size, F1
    /// mean, F1 std, fitness.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let map = |e: csv::Error| Error::validation(format!("csv write failed: {e}"));
        w.write_record(["ensemble_size", "rankers", "subset_size", "f1_mean", "f1_std", "fitness"])
            .map_err(map)?;
        for r in &self.rounds {
            w.write_record([
                r.members.len().to_string(),
                r.members.join("; "),
                r.best.size().to_string(),
                format!("{:.4}", r.best.f1_mean),
                format!("{:.4}", r.best.f1_std),
                format!("{:.4}", r.best.fitness),
            ])
            .map_err(map)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

fn aggregate_members(rankings: &[(String, RankVector)], members: &[usize]) -> Result<RankVector> {
    let vs: Vec<RankVector> = members.iter().map(|&i| rankings[i].1.clone()).collect();
    aggregate_ranks(&vs)
}

fn sorted_names(rankings: &[(String, RankVector)], members: &[usize]) -> Vec<String> {
    let mut names: Vec<String> = members.iter().map(|&i| rankings[i].0.clone()).collect();
    names.sort();
    names
}

/// Drops rankers one at a time. At each step every member is tried as the
/// one to leave out, and the removal whose remaining ensemble scores the
/// highest fitness is taken (ties drop the alphabetically last name). The
/// winner is the best subset over all ensemble sizes; ties keep the larger
/// ensemble.
pub fn recursive_ranker_elimination(
    rankings: &[(String, RankVector)],
    scorer: &SubsetScorer,
    max_k: usize,
) -> Result<EliminationTrace> {
    if rankings.is_empty() {
        return Err(Error::validation("recursive ranker elimination needs at least one ranker"));
    }
    let mut members: Vec<usize> = (0..rankings.len()).collect();
    let mut ranking = aggregate_members(rankings, &members)?;
    let mut best = scorer.best_prefix(&ranking, max_k)?;
    let mut rounds = Vec::new();
    let mut winner = (best.clone(), sorted_names(rankings, &members), ranking.clone());

    while members.len() > 1 {
        let candidates = members
            .par_iter()
            .map(|&drop| {
                let rest: Vec<usize> = members.iter().copied().filter(|&m| m != drop).collect();
                let agg = aggregate_members(rankings, &rest)?;
                let eval = scorer.best_prefix(&agg, max_k)?;
                Ok((drop, rest, agg, eval))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut chosen = 0;
        for (c, cand) in candidates.iter().enumerate() {
            let cur = &candidates[chosen];
            if cand.3.fitness > cur.3.fitness
                || (cand.3.fitness == cur.3.fitness && rankings[cand.0].0 > rankings[cur.0].0)
            {
                chosen = c;
            }
        }
        let (drop, rest, agg, eval) = candidates.into_iter().nth(chosen).expect("non-empty");
        log::debug!(
            "eliminating {} (remaining fitness {:.4})",
            rankings[drop].0,
            eval.fitness
        );
        rounds.push(EliminationRound {
            members: sorted_names(rankings, &members),
            best,
            eliminated: Some(rankings[drop].0.clone()),
        });
        members = rest;
        ranking = agg;
        best = eval;
        if best.fitness > winner.0.fitness {
            winner = (best.clone(), sorted_names(rankings, &members), ranking.clone());
        }
    }
    rounds.push(EliminationRound {
        members: sorted_names(rankings, &members),
        best,
        eliminated: None,
    });
    Ok(EliminationTrace {
        rounds,
        winner: winner.0,
        winner_members: winner.1,
        winner_ranking: winner.2,
    })
}
