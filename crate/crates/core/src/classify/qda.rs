use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Ridge added to each class covariance, relative to its mean variance.
pub const DEFAULT_SHRINKAGE: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gaussian model of one class.
#[derive(Debug, Clone)]
pub struct ClassGaussian {
    pub mean: Vec<f64>,
    /// Regularized covariance.
    pub covariance: Array2<f64>,
    pub log_prior: f64,
    /// Lower Cholesky factor of `covariance`, row-major.
    chol: Vec<f64>,
    log_det: f64,
}

impl ClassGaussian {
    /// Builds the class model from a sample mean and unregularized sample
    /// covariance.
    pub(crate) fn new(
        class: u8,
        mean: Vec<f64>,
        mut covariance: Array2<f64>,
        log_prior: f64,
        shrinkage: f64,
    ) -> Result<Self> {
        let d = mean.len();
        let trace: f64 = covariance.diag().sum();
        let max_diag = covariance.diag().iter().copied().fold(0.0, f64::max);
        if shrinkage > 0.0 {
            // Scale the ridge by the mean variance; fall back to unit scale
            // when every feature is constant within the class.
            let scale = if trace > 0.0 { trace / d as f64 } else { 1.0 };
            for i in 0..d {
                covariance[[i, i]] += shrinkage * scale;
            }
        }
        let singular = || Error::SingularCovariance {
            class,
            hint: "covariance is not positive definite; use a positive shrinkage".to_string(),
        };
        let m = DMatrix::from_fn(d, d, |i, j| covariance[[i, j]]);
        let chol = m.cholesky().ok_or_else(singular)?;
        let l = chol.l();
        let mut flat = vec![0.0; d * d];
        let mut log_det = 0.0;
        for i in 0..d {
            let pivot = l[(i, i)];
            if shrinkage == 0.0 && pivot * pivot <= 1e-12 * max_diag.max(f64::MIN_POSITIVE) {
                return Err(singular());
            }
            log_det += 2.0 * pivot.ln();
            for j in 0..=i {
                flat[i * d + j] = l[(i, j)];
            }
        }
        Ok(ClassGaussian {
            mean,
            covariance,
            log_prior,
            chol: flat,
            log_det,
        })
    }

    /// `log N(x; mean, covariance) + log prior`.
    pub fn discriminant(&self, x: ArrayView1<f64>) -> f64 {
        let mut buf = vec![0.0; self.mean.len()];
        self.discriminant_with(x.iter().copied(), &mut buf)
    }

    pub(crate) fn discriminant_with(&self, x: impl Iterator<Item = f64>, z: &mut [f64]) -> f64 {
        let d = self.mean.len();
        for ((zi, xi), mi) in z.iter_mut().zip(x).zip(&self.mean) {
            *zi = xi - mi;
        }
        // Forward substitution L z = (x - mean), in place.
        let mut maha = 0.0;
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i];
            let s: f64 = row.iter().zip(&z[..i]).map(|(l, v)| l * v).sum();
            z[i] = (z[i] - s) / self.chol[i * d + i];
            maha += z[i] * z[i];
        }
        self.log_prior - 0.5 * (self.log_det + maha + d as f64 * LN_2PI)
    }
}

/// Two-class QDA model.
#[derive(Debug, Clone)]
pub struct QdaModel {
    pub feature_names: Vec<String>,
    pub classes: [ClassGaussian; 2],
    pub shrinkage: f64,
}

impl QdaModel {
    pub fn discriminants(&self, x: ArrayView1<f64>) -> [f64; 2] {
        [self.classes[0].discriminant(x), self.classes[1].discriminant(x)]
    }

    /// Class 1 only when its discriminant is strictly larger.
    pub fn predict_row(&self, x: ArrayView1<f64>) -> u8 {
        let [g0, g1] = self.discriminants(x);
        u8::from(g1 > g0)
    }

    pub fn predict_values(&self, x: ArrayView2<f64>) -> Result<Vec<u8>> {
        let d = self.feature_names.len();
        if x.ncols() != d {
            return Err(Error::validation(format!(
                "model expects {d} features, got {}",
                x.ncols()
            )));
        }
        let mut buf = vec![0.0; d];
        Ok(x.outer_iter()
            .map(|row| {
                let g0 = self.classes[0].discriminant_with(row.iter().copied(), &mut buf);
                let g1 = self.classes[1].discriminant_with(row.iter().copied(), &mut buf);
                u8::from(g1 > g0)
            })
            .collect())
    }
}

pub(crate) fn check_labels(y: &[u8], n: usize) -> Result<[usize; 2]> {
    if y.len() != n {
        return Err(Error::validation(format!("{} labels for {n} samples", y.len())));
    }
    let mut counts = [0usize; 2];
    for &c in y {
        if c > 1 {
            return Err(Error::validation(format!("label {c} is not 0 or 1")));
        }
        counts[c as usize] += 1;
    }
    Ok(counts)
}

/// Fits class means, sample covariances (denominator n-1) plus a ridge of
/// `shrinkage * trace/d`, and frequency priors.
pub fn qda_fit(x: &FeatureMatrix, y: &[u8], shrinkage: f64) -> Result<QdaModel> {
    if !(shrinkage >= 0.0 && shrinkage.is_finite()) {
        return Err(Error::validation(format!("invalid shrinkage {shrinkage}")));
    }
    let counts = check_labels(y, x.n_samples())?;
    let d = x.n_features();
    if d == 0 {
        return Err(Error::validation("QDA needs at least one feature"));
    }
    let n = y.len() as f64;
    let mut models = Vec::with_capacity(2);
    for class in [0u8, 1u8] {
        let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        let nc = rows.len();
        if nc < 2 {
            return Err(Error::validation(format!(
                "class {class} has {nc} samples; QDA needs at least 2"
            )));
        }
        if shrinkage == 0.0 && nc < d + 1 {
            return Err(Error::SingularCovariance {
                class,
                hint: format!("{nc} samples for {d} features; use a positive shrinkage"),
            });
        }
        let xc = x.values.select(Axis(0), &rows);
        let mean = xc.mean_axis(Axis(0)).expect("non-empty class");
        let centered = &xc - &mean;
        let cov = centered.t().dot(&centered) / (nc as f64 - 1.0);
        models.push(ClassGaussian::new(
            class,
            mean.to_vec(),
            cov,
            (counts[class as usize] as f64 / n).ln(),
            shrinkage,
        )?);
    }
    let c1 = models.pop().expect("two classes");
    let c0 = models.pop().expect("two classes");
    Ok(QdaModel {
        feature_names: x.names.clone(),
        classes: [c0, c1],
        shrinkage,
    })
}

pub fn qda_predict(model: &QdaModel, x: &FeatureMatrix) -> Result<Vec<u8>> {
    if model.feature_names != x.names {
        return Err(Error::validation(
            "feature names differ between QDA model and matrix",
        ));
    }
    model.predict_values(x.values.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    fn fm(values: Array2<f64>) -> FeatureMatrix {
        let names = (0..values.ncols()).map(|i| format!("f{i}")).collect();
        FeatureMatrix::new(names, values).unwrap()
    }

    fn symmetric_1d() -> QdaModel {
        let x = fm(array![[-2.0], [-1.0], [0.0], [0.0], [1.0], [2.0]]);
        qda_fit(&x, &[0, 0, 0, 1, 1, 1], DEFAULT_SHRINKAGE).unwrap()
    }

    #[test]
    fn symmetric_boundary_at_zero() {
        let m = symmetric_1d();
        assert_eq!(m.classes[0].mean, vec![-1.0]);
        assert_eq!(m.classes[1].mean, vec![1.0]);
        let [g0, g1] = m.discriminants(array![0.0].view());
        assert!((g0 - g1).abs() < 1e-9);
        // Exactly on the boundary the tie goes to class 0.
        assert_eq!(m.predict_row(array![0.0].view()), 0);
        assert_eq!(m.predict_row(array![1e-6].view()), 1);
        assert_eq!(m.predict_row(array![-1e-6].view()), 0);
        assert_eq!(m.predict_row(array![-1.0].view()), 0);
        assert_eq!(m.predict_row(array![1.0].view()), 1);
    }

    #[test]
    fn wider_class_takes_the_tails() {
        // Equal means; class 1 has 4x the variance of class 0.
        let a = [-1.0, 1.0, -1.0, 1.0];
        let b = [-2.0, 2.0, -2.0, 2.0];
        let mut v: Vec<f64> = a.to_vec();
        v.extend(b);
        let x = fm(Array2::from_shape_vec((8, 1), v).unwrap());
        let m = qda_fit(&x, &[0, 0, 0, 0, 1, 1, 1, 1], 0.0).unwrap();
        assert_eq!(m.predict_row(array![0.0].view()), 0);
        assert_eq!(m.predict_row(array![5.0].view()), 1);
        assert_eq!(m.predict_row(array![-5.0].view()), 1);
    }

    fn log_gauss_2d(x: [f64; 2], mu: [f64; 2], s: [[f64; 2]; 2]) -> f64 {
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        let inv = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];
        let d = [x[0] - mu[0], x[1] - mu[1]];
        let q = d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1]) + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1]);
        -0.5 * q - 0.5 * det.ln() - (2.0 * std::f64::consts::PI).ln()
    }

    #[test]
    fn discriminants_match_direct_log_density() {
        let x0 = [[0.0, 0.0], [1.0, 0.5], [0.5, 2.0], [2.0, 1.0]];
        let x1 = [[3.0, 3.0], [4.0, 2.0], [5.0, 4.5], [3.5, 5.0]];
        let mut rows = vec![];
        for p in x0.iter().chain(&x1) {
            rows.extend_from_slice(p);
        }
        let x = fm(Array2::from_shape_vec((8, 2), rows).unwrap());
        let y = [0, 0, 0, 0, 1, 1, 1, 1];
        let m = qda_fit(&x, &y, 0.0).unwrap();
        let stats = |pts: &[[f64; 2]; 4]| {
            let mu = [pts.iter().map(|p| p[0]).sum::<f64>() / 4.0, pts.iter().map(|p| p[1]).sum::<f64>() / 4.0];
            let mut s = [[0.0; 2]; 2];
            for p in pts {
                for a in 0..2 {
                    for b in 0..2 {
                        s[a][b] += (p[a] - mu[a]) * (p[b] - mu[b]) / 3.0;
                    }
                }
            }
            (mu, s)
        };
        let (mu0, s0) = stats(&x0);
        let (mu1, s1) = stats(&x1);
        for q in [[0.0, 0.0], [2.5, 2.5], [4.0, 1.0], [-1.0, 3.0]] {
            let g = m.discriminants(Array1::from(q.to_vec()).view());
            let e0 = log_gauss_2d(q, mu0, s0) + 0.5f64.ln();
            let e1 = log_gauss_2d(q, mu1, s1) + 0.5f64.ln();
            assert!((g[0] - e0).abs() < 1e-9, "{} vs {e0}", g[0]);
            assert!((g[1] - e1).abs() < 1e-9, "{} vs {e1}", g[1]);
        }
    }

    #[test]
    fn batch_equals_rows_and_checks_names() {
        let m = symmetric_1d();
        let x = fm(array![[-3.0], [0.2], [0.0], [7.0]]);
        let batch = qda_predict(&m, &x).unwrap();
        let rows: Vec<u8> = x.values.outer_iter().map(|r| m.predict_row(r)).collect();
        assert_eq!(batch, rows);
        let renamed = FeatureMatrix::new(vec!["z".into()], x.values.clone()).unwrap();
        assert!(qda_predict(&m, &renamed).is_err());
        let wide = fm(array![[1.0, 2.0]]);
        assert!(m.predict_values(wide.values.view()).is_err());
    }

    #[test]
    fn singular_without_shrinkage_is_an_error() {
        // Second feature duplicates the first.
        let x = fm(array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [5.0, 5.0], [6.0, 6.0], [8.0, 8.0]]);
        let y = [0, 0, 0, 1, 1, 1];
        assert!(matches!(qda_fit(&x, &y, 0.0), Err(Error::SingularCovariance { .. })));
        assert!(qda_fit(&x, &y, DEFAULT_SHRINKAGE).is_ok());
    }

    #[test]
    fn shrinkage_limit_is_stable() {
        let x = fm(array![[0.0, 0.3], [1.0, 0.1], [2.0, 0.7], [0.5, 1.1], [5.0, 5.2], [6.0, 4.1], [8.0, 6.6], [6.5, 5.0]]);
        let y = [0, 0, 0, 0, 1, 1, 1, 1];
        let q = fm(array![[3.0, 3.0], [1.0, 2.0], [4.0, 4.5], [9.0, 1.0], [-2.0, 0.0]]);
        let a = qda_predict(&qda_fit(&x, &y, 1e-6).unwrap(), &q).unwrap();
        let b = qda_predict(&qda_fit(&x, &y, 1e-9).unwrap(), &q).unwrap();
        assert_eq!(a, b);
    }
}
