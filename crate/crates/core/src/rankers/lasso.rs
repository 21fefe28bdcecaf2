use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{class_counts, to_rank_vector, RankVector};
use crate::error::{Error, Result};
use crate::features::{mean_std, FeatureMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoConfig {
    pub n_lambdas: usize,
    /// Smallest lambda as a fraction of lambda_max.
    pub lambda_min_ratio: f64,
    /// A sweep converges when every `g_jj * step_j^2` falls below `tol`
    /// times the target variance.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            n_lambdas: 100,
            lambda_min_ratio: 1e-3,
            tol: 1e-9,
            max_sweeps: 100_000,
        }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_lambdas == 0
            || !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0)
            || !(self.tol > 0.0)
            || self.max_sweeps == 0
        {
            return Err(Error::validation("invalid LASSO configuration"));
        }
        Ok(())
    }
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

fn centered_target(y: &[u8]) -> Vec<f64> {
    let mean = y.iter().map(|&v| f64::from(v)).sum::<f64>() / y.len() as f64;
    y.iter().map(|&v| f64::from(v) - mean).collect()
}

fn check_standardized(x: &FeatureMatrix) -> Result<()> {
    for (j, col) in x.values.axis_iter(Axis(1)).enumerate() {
        let (mu, sd) = mean_std(col.iter().copied());
        if mu.abs() > 1e-6 || (sd - 1.0).abs() > 1e-6 {
            return Err(Error::validation(format!(
                "LASSO needs standardized columns; `{}` has mean {mu:.3e}, std {sd:.6}",
                x.names[j]
            )));
        }
    }
    Ok(())
}

/// Geometric grid from `lambda_max = max_j |x_j^T (y - ybar)| / n` down to
/// `lambda_max * lambda_min_ratio`.
pub fn lambda_grid(x: &FeatureMatrix, y: &[u8], config: &LassoConfig) -> Result<Vec<f64>> {
    config.validate()?;
    class_counts(x, y)?;
    let yc = centered_target(y);
    let n = y.len() as f64;
    let lambda_max = x
        .values
        .axis_iter(Axis(1))
        .map(|col| col.iter().zip(&yc).map(|(a, b)| a * b).sum::<f64>().abs() / n)
        .fold(0.0, f64::max);
    if !(lambda_max > 0.0) {
        return Err(Error::validation("no feature correlates with the target"));
    }
    let k = config.n_lambdas;
    Ok((0..k)
        .map(|i| {
            if k == 1 {
                lambda_max
            } else {
                lambda_max * config.lambda_min_ratio.powf(i as f64 / (k - 1) as f64)
            }
        })
        .collect())
}

/// Coefficients of `(1/2n) ||y - Xb||^2 + lambda ||b||_1` at each grid
/// point, warm-started along the path. Uses covariance updates, so each
/// sweep costs O(d) per moving coordinate rather than O(n).
pub fn lasso_path(x: ArrayView2<f64>, y: &[f64], grid: &[f64], config: &LassoConfig) -> Result<Vec<Vec<f64>>> {
    let (n, d) = x.dim();
    if y.len() != n {
        return Err(Error::validation("target length differs from sample count"));
    }
    let nf = n as f64;
    let gram: Array2<f64> = x.t().dot(&x) / nf;
    let xty: Vec<f64> = x
        .axis_iter(Axis(1))
        .map(|col| col.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / nf)
        .collect();
    let y_var = y.iter().map(|v| v * v).sum::<f64>() / nf;
    let threshold = config.tol * y_var.max(f64::MIN_POSITIVE);
    let mut beta = vec![0.0; d];
    // q = gram * beta
    let mut q = vec![0.0; d];
    let mut path = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let mut converged = false;
        for _ in 0..config.max_sweeps {
            let mut max_change: f64 = 0.0;
            for j in 0..d {
                let gjj = gram[[j, j]];
                if gjj <= 0.0 {
                    continue;
                }
                let rho = xty[j] - q[j] + gjj * beta[j];
                let new = soft_threshold(rho, lambda) / gjj;
                let step = new - beta[j];
                if step != 0.0 {
                    for (qk, g) in q.iter_mut().zip(gram.column(j)) {
                        *qk += step * g;
                    }
                    beta[j] = new;
                    max_change = max_change.max(gjj * step * step);
                }
            }
            if max_change < threshold {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                solver: "LASSO coordinate descent",
                iterations: config.max_sweeps,
            });
        }
        path.push(beta.clone());
    }
    Ok(path)
}

/// Ranks features by the largest lambda at which their coefficient becomes
/// nonzero. Features that never activate follow in column order.
pub fn rank_lasso(x: &FeatureMatrix, y: &[u8], grid: &[f64], config: &LassoConfig) -> Result<RankVector> {
    class_counts(x, y)?;
    check_standardized(x)?;
    if grid.is_empty() || grid.windows(2).any(|w| w[0] <= w[1]) || grid.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::validation("lambda grid must be positive and strictly descending"));
    }
    let yc = centered_target(y);
    let path = lasso_path(x.values.view(), &yc, grid, config)?;
    let mut score = vec![0.0; x.n_features()];
    for (lambda, beta) in grid.iter().zip(&path) {
        for (s, b) in score.iter_mut().zip(beta) {
            if *s == 0.0 && *b != 0.0 {
                *s = *lambda;
            }
        }
    }
    to_rank_vector(&x.names, &score, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::windowing::{apply_normalizer, fit_normalizer};
    use ndarray::array;

    fn standardized(values: Array2<f64>) -> FeatureMatrix {
        let names = (0..values.ncols()).map(|i| format!("f{i}")).collect();
        let raw = FeatureMatrix::new(names, values).unwrap();
        apply_normalizer(&fit_normalizer(&raw).unwrap(), &raw).unwrap()
    }

    /// Columns with zero mean, unit population variance and zero mutual
    /// inner product, so X^T X / n = I.
    fn orthonormal_design() -> FeatureMatrix {
        let a = [1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let b = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        FeatureMatrix::new(
            vec!["a".into(), "b".into()],
            Array2::from_shape_fn((8, 2), |(i, j)| if j == 0 { a[i] } else { b[i] }),
        )
        .unwrap()
    }

    #[test]
    fn orthonormal_path_is_soft_thresholding() {
        let x = orthonormal_design();
        let y: [u8; 8] = [1, 1, 0, 0, 1, 0, 0, 0];
        let yc = centered_target(&y);
        let grid = lambda_grid(&x, &y, &LassoConfig::default()).unwrap();
        let path = lasso_path(x.values.view(), &yc, &grid, &LassoConfig::default()).unwrap();
        let z: Vec<f64> = (0..2)
            .map(|j| x.values.column(j).iter().zip(&yc).map(|(a, b)| a * b).sum::<f64>() / 8.0)
            .collect();
        for (lambda, beta) in grid.iter().zip(&path) {
            for j in 0..2 {
                assert!((beta[j] - soft_threshold(z[j], *lambda)).abs() < 1e-8);
            }
        }
        // Activation order follows |x_j^T y|.
        let rv = rank_lasso(&x, &y, &grid, &LassoConfig::default()).unwrap();
        let expected = if z[0].abs() >= z[1].abs() { vec![1, 2] } else { vec![2, 1] };
        assert_eq!(rv.ranks, expected);
    }

    #[test]
    fn nothing_active_at_lambda_max() {
        let x = orthonormal_design();
        let y: [u8; 8] = [1, 1, 0, 0, 1, 0, 0, 0];
        let grid = lambda_grid(&x, &y, &LassoConfig::default()).unwrap();
        let path = lasso_path(x.values.view(), &centered_target(&y), &grid[..1], &LassoConfig::default()).unwrap();
        assert!(path[0].iter().all(|&b| b == 0.0));
        let above = [grid[0] * 2.0];
        let path = lasso_path(x.values.view(), &centered_target(&y), &above, &LassoConfig::default()).unwrap();
        assert!(path[0].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn duplicate_columns_keep_column_order() {
        let x = standardized(array![
            [0.1, 0.1, 3.0],
            [0.5, 0.5, 1.0],
            [0.9, 0.9, 2.0],
            [1.4, 1.4, 0.5],
            [2.0, 2.0, 2.5],
            [2.2, 2.2, 1.5]
        ]);
        let y = [0, 0, 0, 1, 1, 1];
        let cfg = LassoConfig::default();
        let grid = lambda_grid(&x, &y, &cfg).unwrap();
        let rv = rank_lasso(&x, &y, &grid, &cfg).unwrap();
        assert!(rv.ranks[0] < rv.ranks[1]);
        assert_eq!(rv.ranks[0], 1);
    }

    #[test]
    fn unnormalized_input_rejected() {
        let x = FeatureMatrix::new(vec!["a".into()], array![[1.0], [2.0], [3.0], [4.0]]).unwrap();
        let err = rank_lasso(&x, &[0, 0, 1, 1], &[0.1], &LassoConfig::default());
        assert!(matches!(err, Err(Error::Validation(_))));
    }
}
