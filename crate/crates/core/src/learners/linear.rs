use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Weighted least squares `argmin Σ wᵢ (yᵢ − xᵢᵀβ)²` on the raw design (no
/// intercept is added).
pub fn fit_least_squares(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<DVector<f64>> {
    let (n, d) = x.shape();
    if y.len() != n || w.len() != n {
        return Err(Error::InvalidInput("least squares: length mismatch".into()));
    }
    if n < d {
        return Err(Error::InsufficientData { needed: d - 1, got: n });
    }
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("least squares: weights must be finite and nonnegative".into()));
    }
    if !(w.iter().sum::<f64>() > 0.0) {
        return Err(Error::InvalidInput("least squares: weights sum to zero".into()));
    }
    linalg::weighted_least_squares(x, y, Some(w))
}

/// Prepend a column of ones.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LinearModel {
    pub fn fit(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let xi = with_intercept(x);
        let w = vec![1.0; y.len()];
        let beta = fit_least_squares(&xi, y, &w)?;
        Ok(LinearModel {
            intercept: beta[0],
            coef: beta.iter().skip(1).copied().collect(),
        })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                self.intercept
                    + self
                        .coef
                        .iter()
                        .enumerate()
                        .map(|(j, c)| c * x[(i, j)])
                        .sum::<f64>()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_design() {
        let x = DMatrix::identity(2, 2);
        let b = fit_least_squares(&x, &[1.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(b[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(b[1], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn three_point_line_matches_hand_solution() {
        // XᵀX = [[3,6],[6,14]], Xᵀy = [5,11] → β = (2/3, 1/2)
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let b = fit_least_squares(&x, &[1.0, 2.0, 2.0], &[1.0; 3]).unwrap();
        assert_relative_eq!(b[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(b[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn duplicated_column_is_singular() {
        let x = DMatrix::from_row_slice(4, 3, &[
            1.0, 0.5, 0.5, //
            1.0, 1.5, 1.5, //
            1.0, -0.2, -0.2, //
            1.0, 0.9, 0.9,
        ]);
        let err = fit_least_squares(&x, &[1.0, 2.0, 0.0, 1.0], &[1.0; 4]).unwrap_err();
        assert!(matches!(err, Error::SingularDesign { .. }));
    }

    #[test]
    fn weighted_normal_equations_hold() {
        let x = DMatrix::from_row_slice(5, 2, &[1.0, 0.1, 1.0, 0.7, 1.0, -0.4, 1.0, 2.0, 1.0, 1.1]);
        let y = [0.3, 1.2, -0.5, 2.2, 0.9];
        let w = [0.5, 2.0, 1.0, 0.1, 3.0];
        let b = fit_least_squares(&x, &y, &w).unwrap();
        for j in 0..2 {
            let g: f64 = (0..5).map(|i| w[i] * x[(i, j)] * (x[(i, 0)] * b[0] + x[(i, 1)] * b[1] - y[i])).sum();
            assert!(g.abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_zero_weights() {
        let x = DMatrix::identity(2, 2);
        assert!(fit_least_squares(&x, &[1.0, 2.0], &[0.0, 0.0]).is_err());
    }
}
