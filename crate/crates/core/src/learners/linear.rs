//! Least squares with an unpenalized intercept.
//!
//! The centered design is reduced with a Householder QR and the small `R`
//! factor is decomposed by SVD, which reveals the numerical rank. Ridge
//! solutions reuse the same factorization: `b = V diag(s / (s² + λ)) Uᵀ Qᵀy`.

use nalgebra::{DMatrix, DVector};

use crate::matrix::FeatureMatrix;

/// Relative singular value threshold below which the design is treated as
/// rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Ridge penalty used when the least squares problem is rank deficient.
pub const FALLBACK_LAMBDA: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>()
    }
}

/// Fits ordinary least squares (`lambda = None`) or ridge. Returns the model
/// and whether OLS hit a rank-deficient design and fell back to ridge.
pub(crate) fn fit(x: &FeatureMatrix, y: &[f64], lambda: Option<f64>) -> (LinearModel, bool) {
    let n = x.nrows();
    let p = x.ncols();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let x_means: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64)
        .collect();
    if p == 0 {
        return (LinearModel { intercept: y_mean, coefficients: vec![] }, false);
    }
    let xc = DMatrix::from_fn(n, p, |i, j| x.get(i, j) - x_means[j]);
    let mut yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    let qr = xc.qr();
    qr.q_tr_mul(&mut yc);
    let r = qr.r();
    let k = r.nrows();
    let qty = yc.rows(0, k).into_owned();
    let svd = r.svd(true, true);
    let u = svd.u.as_ref().expect("svd requested u");
    let v_t = svd.v_t.as_ref().expect("svd requested v_t");
    let s = &svd.singular_values;
    let s_max = s.iter().cloned().fold(0.0, f64::max);

    let mut degenerate = false;
    let lambda = match lambda {
        Some(l) => l,
        None => {
            let s_min = s.iter().cloned().fold(f64::INFINITY, f64::min);
            if k < p || s_max == 0.0 || s_min <= RANK_TOL * s_max {
                degenerate = true;
                FALLBACK_LAMBDA
            } else {
                0.0
            }
        }
    };
    let uty = u.transpose() * qty;
    let scaled = DVector::from_iterator(
        s.len(),
        s.iter().zip(uty.iter()).map(|(&sv, &c)| {
            let denom = sv * sv + lambda;
            if denom > 0.0 {
                sv * c / denom
            } else {
                0.0
            }
        }),
    );
    let b = v_t.transpose() * scaled;
    let coefficients: Vec<f64> = b.iter().copied().collect();
    let intercept = y_mean - coefficients.iter().zip(&x_means).map(|(b, m)| b * m).sum::<f64>();
    (LinearModel { intercept, coefficients }, degenerate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_data_is_interpolated() {
        let x = FeatureMatrix::from_columns(&[
            vec![0.1, -1.0, 2.0, 0.5, 1.5, -0.7],
            vec![1.0, 0.3, -0.2, 0.8, -1.1, 0.4],
        ]);
        let y: Vec<f64> = (0..6).map(|i| 3.0 + 2.0 * x.get(i, 0) - 0.5 * x.get(i, 1)).collect();
        let (m, degenerate) = fit(&x, &y, None);
        assert!(!degenerate);
        assert!((m.intercept - 3.0).abs() < 1e-10);
        assert!((m.coefficients[0] - 2.0).abs() < 1e-10);
        assert!((m.coefficients[1] + 0.5).abs() < 1e-10);
    }

    #[test]
    fn ridge_shrinks_towards_zero() {
        let x = FeatureMatrix::from_columns(&[vec![1.0, 2.0, 3.0, 4.0]]);
        let y = vec![2.0, 4.0, 6.0, 8.0];
        let (ols, _) = fit(&x, &y, None);
        let (ridge, _) = fit(&x, &y, Some(10.0));
        assert!(ridge.coefficients[0].abs() < ols.coefficients[0].abs());
        // centered sxx = 5, sxy = 10: b = 10 / (5 + 10)
        assert!((ridge.coefficients[0] - 10.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn fewer_rows_than_columns_falls_back() {
        let x = FeatureMatrix::from_columns(&[vec![1.0, 2.0], vec![0.0, 5.0], vec![3.0, 1.0]]);
        let (m, degenerate) = fit(&x, &[1.0, 2.0], None);
        assert!(degenerate);
        assert!(m.coefficients.iter().all(|b| b.is_finite()));
    }
}
