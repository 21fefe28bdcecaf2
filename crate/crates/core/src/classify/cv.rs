use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::weighted_f1;
use super::qda::{check_labels, ClassGaussian};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::seed::SeedTree;

/// Fold scores with their mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub fold_scores: Vec<f64>,
    pub f1_mean: f64,
    pub f1_std: f64,
}

impl CvResult {
    fn from_scores(fold_scores: Vec<f64>) -> Self {
        let k = fold_scores.len() as f64;
        let f1_mean = fold_scores.iter().sum::<f64>() / k;
        let f1_std = (fold_scores.iter().map(|s| (s - f1_mean).powi(2)).sum::<f64>() / k).sqrt();
        CvResult {
            fold_scores,
            f1_mean,
            f1_std,
        }
    }
}

/// Fold index for every sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub fold_of: Vec<usize>,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }
}

/// Shuffles each class with a seeded RNG and deals its samples round-robin
/// over the folds, continuing the deal across classes so fold sizes stay
/// within one of each other.
pub fn stratified_folds(y: &[u8], n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds < 2 {
        return Err(Error::validation(format!("need at least 2 folds, got {n_folds}")));
    }
    let counts = check_labels(y, y.len())?;
    for (class, &c) in counts.iter().enumerate() {
        if c < n_folds {
            return Err(Error::validation(format!(
                "class {class} has {c} samples, fewer than {n_folds} folds"
            )));
        }
    }
    let mut rng = SeedTree::new(seed).rng();
    let mut fold_of = vec![0; y.len()];
    let mut dealt = 0;
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            fold_of[i] = dealt % n_folds;
            dealt += 1;
        }
    }
    Ok(FoldPlan { n_folds, fold_of })
}

struct Moments {
    count: usize,
    sum: Vec<f64>,
    /// Raw second moments, `d x d`.
    cross: Array2<f64>,
}

impl Moments {
    fn zeros(d: usize) -> Self {
        Moments {
            count: 0,
            sum: vec![0.0; d],
            cross: Array2::zeros((d, d)),
        }
    }
}

/// Cross-validated QDA over any column subset of a fixed matrix.
///
/// Per-fold class moments are accumulated once, so scoring a subset only
/// costs the factorizations and the held-out predictions.
pub struct CvEngine {
    x: Array2<f64>,
    y: Vec<u8>,
    plan: FoldPlan,
    test_rows: Vec<Vec<usize>>,
    /// `[fold][class]` moments of the held-out rows.
    fold_moments: Vec<[Moments; 2]>,
    totals: [Moments; 2],
    shrinkage: f64,
}

impl CvEngine {
    pub fn new(x: ArrayView2<f64>, y: &[u8], plan: FoldPlan, shrinkage: f64) -> Result<Self> {
        check_labels(y, x.nrows())?;
        if plan.fold_of.len() != y.len() {
            return Err(Error::validation("fold plan does not match sample count"));
        }
        let d = x.ncols();
        let mut fold_moments: Vec<[Moments; 2]> = (0..plan.n_folds)
            .map(|_| [Moments::zeros(d), Moments::zeros(d)])
            .collect();
        for f in 0..plan.n_folds {
            for class in 0..2u8 {
                let rows: Vec<usize> = (0..y.len())
                    .filter(|&i| plan.fold_of[i] == f && y[i] == class)
                    .collect();
                let xc = x.select(ndarray::Axis(0), &rows);
                let m = &mut fold_moments[f][class as usize];
                m.count = rows.len();
                for row in xc.outer_iter() {
                    for (s, v) in m.sum.iter_mut().zip(row) {
                        *s += v;
                    }
                }
                m.cross = xc.t().dot(&xc);
            }
        }
        let mut totals = [Moments::zeros(d), Moments::zeros(d)];
        for fm in &fold_moments {
            for c in 0..2 {
                totals[c].count += fm[c].count;
                for (t, s) in totals[c].sum.iter_mut().zip(&fm[c].sum) {
                    *t += s;
                }
                totals[c].cross += &fm[c].cross;
            }
        }
        let test_rows = (0..plan.n_folds).map(|f| plan.test_rows(f)).collect();
        Ok(CvEngine {
            x: x.to_owned(),
            y: y.to_vec(),
            plan,
            test_rows,
            fold_moments,
            totals,
            shrinkage,
        })
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_folds(&self) -> usize {
        self.plan.n_folds
    }

    /// Scores the given columns (in the given order) with weighted F1 on
    /// every held-out fold.
    pub fn evaluate(&self, subset: &[usize]) -> Result<CvResult> {
        if subset.is_empty() {
            return Err(Error::validation("cannot evaluate an empty feature subset"));
        }
        if let Some(&bad) = subset.iter().find(|&&j| j >= self.n_features()) {
            return Err(Error::validation(format!("feature index {bad} out of range")));
        }
        let d = subset.len();
        let mut scores = Vec::with_capacity(self.plan.n_folds);
        let mut buf = vec![0.0; d];
        for f in 0..self.plan.n_folds {
            let n_train: usize = (0..2)
                .map(|c| self.totals[c].count - self.fold_moments[f][c].count)
                .sum();
            let mut models = Vec::with_capacity(2);
            for c in 0..2usize {
                let total = &self.totals[c];
                let held = &self.fold_moments[f][c];
                let nc = total.count - held.count;
                if nc < 2 {
                    return Err(Error::validation(format!(
                        "fold {f} leaves {nc} training samples in class {c}"
                    )));
                }
                let nf = nc as f64;
                let mean: Vec<f64> = subset
                    .iter()
                    .map(|&j| (total.sum[j] - held.sum[j]) / nf)
                    .collect();
                let cov = Array2::from_shape_fn((d, d), |(a, b)| {
                    let (ja, jb) = (subset[a], subset[b]);
                    let cross = total.cross[[ja, jb]] - held.cross[[ja, jb]];
                    (cross - nf * mean[a] * mean[b]) / (nf - 1.0)
                });
                let prior = (nf / n_train as f64).ln();
                models.push(ClassGaussian::new(c as u8, mean, cov, prior, self.shrinkage)?);
            }
            let rows = &self.test_rows[f];
            let mut truth = Vec::with_capacity(rows.len());
            let mut pred = Vec::with_capacity(rows.len());
            for &i in rows {
                let row = self.x.row(i);
                let g0 = models[0].discriminant_with(subset.iter().map(|&j| row[j]), &mut buf);
                let g1 = models[1].discriminant_with(subset.iter().map(|&j| row[j]), &mut buf);
                truth.push(self.y[i]);
                pred.push(u8::from(g1 > g0));
            }
            scores.push(weighted_f1(&truth, &pred));
        }
        Ok(CvResult::from_scores(scores))
    }
}

/// Stratified k-fold cross-validation of QDA on all columns of `x`.
pub fn cross_validate(
    x: &FeatureMatrix,
    y: &[u8],
    folds: usize,
    seed: u64,
    shrinkage: f64,
) -> Result<CvResult> {
    let plan = stratified_folds(y, folds, seed)?;
    let engine = CvEngine::new(x.values.view(), y, plan, shrinkage)?;
    let all: Vec<usize> = (0..x.n_features()).collect();
    engine.evaluate(&all)
}
