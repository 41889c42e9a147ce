use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ForecastError;

/// Ridge regression on standardized inputs with an unpenalized intercept.
/// Columns with zero variance in the training data are given a zero weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl RidgeModel {
    /// `rows` is row-major with `n_features` columns.
    pub fn fit(rows: &[f64], y: &[f64], n_features: usize, lambda: f64) -> Result<Self, ForecastError> {
        let n = y.len();
        if n == 0 || rows.len() != n * n_features {
            return Err(ForecastError::Shape(format!("{} rows for {} targets", rows.len() / n_features.max(1), n)));
        }
        let x = DMatrix::from_row_slice(n, n_features, rows);
        let mut mean = vec![0.0; n_features];
        let mut scale = vec![1.0; n_features];
        let mut keep = Vec::new();
        for j in 0..n_features {
            let col = x.column(j);
            let m = col.mean();
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            mean[j] = m;
            if var > 1e-20 {
                scale[j] = var.sqrt();
                keep.push(j);
            }
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let mut coef = vec![0.0; n_features];
        if !keep.is_empty() {
            let z = DMatrix::from_fn(n, keep.len(), |i, k| (x[(i, keep[k])] - mean[keep[k]]) / scale[keep[k]]);
            let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
            let mut gram = z.tr_mul(&z);
            for d in 0..keep.len() {
                gram[(d, d)] += lambda;
            }
            let rhs = z.tr_mul(&yc);
            let chol = gram.cholesky().ok_or(ForecastError::Singular)?;
            let w = chol.solve(&rhs);
            if w.iter().any(|v| !v.is_finite()) {
                return Err(ForecastError::Singular);
            }
            for (k, &j) in keep.iter().enumerate() {
                coef[j] = w[k];
            }
        }
        Ok(Self { mean, scale, coef, intercept: y_mean })
    }

    pub fn predict(&self, features: &[f64]) -> f64 {
        self.intercept
            + features
                .iter()
                .zip(self.mean.iter().zip(self.scale.iter().zip(&self.coef)))
                .map(|(x, (m, (s, c)))| c * (x - m) / s)
                .sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_linear_map() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..50 {
            let a = (i as f64 * 0.3).sin();
            let b = (i as f64 * 0.7).cos();
            rows.extend([a, b]);
            y.push(2.0 * a - 3.0 * b + 1.0);
        }
        let m = RidgeModel::fit(&rows, &y, 2, 1e-10).unwrap();
        assert!((m.predict(&[0.2, -0.4]) - (0.4 + 1.2 + 1.0)).abs() < 1e-6);
    }

    #[test]
    fn constant_target_fits_exactly() {
        let rows: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let m = RidgeModel::fit(&rows, &[3.0; 40], 1, 1.0).unwrap();
        assert!((m.predict(&[17.5]) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn huge_penalty_shrinks_to_mean() {
        let rows: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..40).map(|i| 2.0 * i as f64).collect();
        let m = RidgeModel::fit(&rows, &y, 1, 1e15).unwrap();
        assert!(m.coef[0].abs() < 1e-9);
        assert!((m.predict(&[0.0]) - 39.0).abs() < 1e-6);
    }

    #[test]
    fn collinear_columns_without_penalty_are_singular() {
        let rows: Vec<f64> = (0..20).flat_map(|i| [i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert!(matches!(RidgeModel::fit(&rows, &y, 2, 0.0), Err(ForecastError::Singular)));
    }
}
