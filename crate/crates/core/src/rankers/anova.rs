use ndarray::Axis;

use super::{class_counts, to_rank_vector, RankVector};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// One-way ANOVA F statistic of each feature between the two classes.
///
/// A feature with no within-class spread scores +inf when its class means
/// differ and 0 when it is constant.
pub fn anova_f(x: &FeatureMatrix, y: &[u8]) -> Result<Vec<f64>> {
    let counts = class_counts(x, y)?;
    if let Some(c) = counts.iter().position(|&c| c < 2) {
        return Err(Error::validation(format!(
            "class {c} has {} samples; ANOVA needs at least 2",
            counts[c]
        )));
    }
    let n = y.len() as f64;
    let (df_between, df_within) = (1.0, n - 2.0);
    Ok(x.values
        .axis_iter(Axis(1))
        .map(|col| {
            let mut sum = [0.0; 2];
            for (&v, &c) in col.iter().zip(y) {
                sum[c as usize] += v;
            }
            let means = [sum[0] / counts[0] as f64, sum[1] / counts[1] as f64];
            let grand = (sum[0] + sum[1]) / n;
            let ssb: f64 = (0..2)
                .map(|c| counts[c] as f64 * (means[c] - grand).powi(2))
                .sum();
            let ssw: f64 = col
                .iter()
                .zip(y)
                .map(|(&v, &c)| (v - means[c as usize]).powi(2))
                .sum();
            if ssw > 0.0 {
                (ssb / df_between) / (ssw / df_within)
            } else if ssb > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .collect())
}

pub fn rank_select_k_best(x: &FeatureMatrix, y: &[u8]) -> Result<RankVector> {
    let f = anova_f(x, y)?;
    to_rank_vector(&x.names, &f, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fm(values: ndarray::Array2<f64>) -> FeatureMatrix {
        let names = (0..values.ncols()).map(|i| format!("f{i}")).collect();
        FeatureMatrix::new(names, values).unwrap()
    }

    #[test]
    fn hand_computed_f() {
        // SSB = 2(1.5-2.5)^2 + 2(3.5-2.5)^2 = 4 over 1 df; SSW = 1 over 2 df.
        let x = fm(array![[1.0], [2.0], [3.0], [4.0]]);
        let f = anova_f(&x, &[0, 0, 1, 1]).unwrap();
        assert_eq!(f, vec![8.0]);
    }

    #[test]
    fn separating_feature_ranks_first() {
        let x = fm(array![[5.0, 0.1], [5.0, 0.3], [5.0, 2.1], [5.0, 2.4]]);
        let rv = rank_select_k_best(&x, &[0, 0, 1, 1]).unwrap();
        assert_eq!(rv.ranks, vec![2, 1]);
    }

    #[test]
    fn duplicates_adjacent_earlier_first() {
        let x = fm(array![[0.5, 1.0, 1.0], [0.1, 2.0, 2.0], [0.2, 3.5, 3.5], [0.4, 4.0, 4.0]]);
        let rv = rank_select_k_best(&x, &[0, 0, 1, 1]).unwrap();
        assert_eq!(rv.ranks, vec![3, 1, 2]);
    }

    #[test]
    fn tiny_class_rejected() {
        let x = fm(array![[1.0], [2.0], [3.0]]);
        assert!(anova_f(&x, &[0, 0, 1]).is_err());
        assert!(anova_f(&x, &[0, 0, 0]).is_err());
    }
}
