use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{class_counts, to_rank_vector, RankVector};
use crate::classify::{stratified_folds, CvEngine, DEFAULT_SHRINKAGE};
use crate::ensemble::fitness;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::seed::SeedTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CcsaConfig {
    pub n_crows: usize,
    pub n_iterations: usize,
    pub flight_length: f64,
    pub awareness_probability: f64,
    /// Starting value of the logistic map that modulates awareness.
    pub chaos_x0: f64,
    pub cv_folds: usize,
    pub shrinkage: f64,
}

impl Default for CcsaConfig {
    fn default() -> Self {
        CcsaConfig {
            n_crows: 20,
            n_iterations: 100,
            flight_length: 2.0,
            awareness_probability: 0.1,
            chaos_x0: 0.7,
            cv_folds: 10,
            shrinkage: DEFAULT_SHRINKAGE,
        }
    }
}

impl CcsaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_crows == 0 || self.n_iterations == 0 || self.cv_folds < 2 {
            return Err(Error::validation("CCSA needs crows, iterations and at least 2 folds"));
        }
        if !(0.0..=1.0).contains(&self.awareness_probability) {
            return Err(Error::validation("CCSA awareness probability must lie in [0, 1]"));
        }
        // 0, 0.25, 0.5, 0.75 and 1 fall onto fixed points of the map.
        if !(self.chaos_x0 > 0.0 && self.chaos_x0 < 1.0) || [0.25, 0.5, 0.75].contains(&self.chaos_x0) {
            return Err(Error::validation("CCSA chaos seed must lie in (0, 1) off the map's fixed points"));
        }
        if !(self.flight_length > 0.0 && self.flight_length.is_finite()) {
            return Err(Error::validation("CCSA flight length must be positive"));
        }
        if !(self.shrinkage >= 0.0) {
            return Err(Error::validation("shrinkage must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcsaOutcome {
    /// Iterations each feature spent in the global-best subset.
    pub lifetimes: Vec<usize>,
    /// Column indices of the final global best, ascending.
    pub best_subset: Vec<usize>,
    pub best_fitness: f64,
    /// Global-best fitness after each iteration.
    pub history: Vec<f64>,
}

fn transfer(v: f64) -> f64 {
    1.0 / (1.0 + (-10.0 * (v - 0.5)).exp())
}

fn indices(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
}

struct Fitness<'a> {
    engine: &'a CvEngine,
    cache: HashMap<Vec<bool>, f64>,
}

impl Fitness<'_> {
    fn of(&mut self, mask: &[bool]) -> Result<f64> {
        if let Some(&f) = self.cache.get(mask) {
            return Ok(f);
        }
        let subset = indices(mask);
        let cv = self.engine.evaluate(&subset)?;
        let f = fitness(cv.f1_mean, subset.len(), mask.len());
        self.cache.insert(mask.to_vec(), f);
        Ok(f)
    }
}

/// Binary chaotic crow search over feature masks.
///
/// Each crow picks a random crow to follow. If the chaotic awareness value
/// is at least the awareness probability it flies toward that crow's
/// memory, otherwise the followed crow notices and the pursuer lands on a
/// random mask. Continuous moves are binarized through a steep sigmoid.
/// Moves to the empty mask are rejected.
pub fn ccsa_search(x: &FeatureMatrix, y: &[u8], config: &CcsaConfig, seed: u64) -> Result<CcsaOutcome> {
    config.validate()?;
    class_counts(x, y)?;
    let d = x.n_features();
    if d < 2 {
        return Err(Error::validation("CCSA needs at least 2 features"));
    }
    let tree = SeedTree::new(seed);
    let plan = stratified_folds(y, config.cv_folds, tree.child("folds").seed())?;
    let engine = CvEngine::new(x.values.view(), y, plan, config.shrinkage)?;
    let mut fit = Fitness {
        engine: &engine,
        cache: HashMap::new(),
    };
    let mut rng = tree.child("search").rng();
    let random_mask = |rng: &mut rand_chacha::ChaCha8Rng| loop {
        let m: Vec<bool> = (0..d).map(|_| rng.gen_bool(0.5)).collect();
        if m.iter().any(|&b| b) {
            return m;
        }
    };

    let mut positions: Vec<Vec<bool>> = (0..config.n_crows).map(|_| random_mask(&mut rng)).collect();
    let mut memories = positions.clone();
    let mut mem_fit = memories.iter().map(|m| fit.of(m)).collect::<Result<Vec<_>>>()?;
    let mut chaos = config.chaos_x0;
    let mut lifetimes = vec![0usize; d];
    let mut history = Vec::with_capacity(config.n_iterations);

    for _ in 0..config.n_iterations {
        for i in 0..config.n_crows {
            let j = rng.gen_range(0..config.n_crows);
            chaos = 4.0 * chaos * (1.0 - chaos);
            let candidate = if chaos >= config.awareness_probability {
                let r: f64 = rng.gen();
                let pos = &positions[i];
                let target = &memories[j];
                (0..d)
                    .map(|b| {
                        let p = f64::from(u8::from(pos[b]));
                        let v = p + r * config.flight_length * (f64::from(u8::from(target[b])) - p);
                        rng.gen::<f64>() < transfer(v)
                    })
                    .collect::<Vec<bool>>()
            } else {
                random_mask(&mut rng)
            };
            if candidate.iter().any(|&b| b) {
                positions[i] = candidate;
            }
        }
        for i in 0..config.n_crows {
            let f = fit.of(&positions[i])?;
            if f > mem_fit[i] {
                mem_fit[i] = f;
                memories[i] = positions[i].clone();
            }
        }
        let best = (0..config.n_crows)
            .fold(0, |b, i| if mem_fit[i] > mem_fit[b] { i } else { b });
        for (life, &on) in lifetimes.iter_mut().zip(&memories[best]) {
            *life += usize::from(on);
        }
        history.push(mem_fit[best]);
    }
    let best = (0..config.n_crows).fold(0, |b, i| if mem_fit[i] > mem_fit[b] { i } else { b });
    log::debug!("CCSA evaluated {} distinct subsets", fit.cache.len());
    Ok(CcsaOutcome {
        lifetimes,
        best_subset: indices(&memories[best]),
        best_fitness: mem_fit[best],
        history,
    })
}

pub fn rank_ccsa(x: &FeatureMatrix, y: &[u8], config: &CcsaConfig, seed: u64) -> Result<RankVector> {
    let outcome = ccsa_search(x, y, config, seed)?;
    let scores: Vec<f64> = outcome.lifetimes.iter().map(|&l| l as f64).collect();
    to_rank_vector(&x.names, &scores, true)
}
