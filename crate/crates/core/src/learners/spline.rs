//! Additive natural cubic regression splines.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

const RIDGE: f64 = 1e-6;

/// Per-column basis: the raw value plus the truncated-power natural spline
/// terms `d_j(x) − d_{K−1}(x)` for knots `ξ_1 < … < ξ_K`.
#[derive(Debug, Clone, PartialEq)]
struct ColumnBasis {
    column: usize,
    knots: Vec<f64>,
}

impl ColumnBasis {
    fn n_nonlinear(&self) -> usize {
        self.knots.len().saturating_sub(2)
    }

    fn d(&self, j: usize, x: f64) -> f64 {
        let k = self.knots.len();
        let cube = |t: f64| if t > 0.0 { t * t * t } else { 0.0 };
        (cube(x - self.knots[j]) - cube(x - self.knots[k - 1])) / (self.knots[k - 1] - self.knots[j])
    }

    fn push_terms(&self, x: f64, out: &mut Vec<f64>) {
        out.push(x);
        let k = self.knots.len();
        if k < 3 {
            return;
        }
        let last = self.d(k - 2, x);
        for j in 0..k - 2 {
            out.push(self.d(j, x) - last);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineModel {
    columns: Vec<ColumnBasis>,
    coef: DVector<f64>,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn unique_count(sorted: &[f64]) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    1 + sorted.windows(2).filter(|w| w[1] > w[0]).count()
}

impl SplineModel {
    fn expand(&self, x: &DMatrix<f64>, i: usize) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.coef.len());
        row.push(1.0);
        for c in &self.columns {
            c.push_terms(x[(i, c.column)], &mut row);
        }
        row
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                self.expand(x, i)
                    .iter()
                    .zip(self.coef.iter())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// Least squares on an additive natural cubic spline expansion with
/// `knots_per_dim` interior quantile knots per column. Only the nonlinear
/// terms are ridge-penalized, so `knots_per_dim = 0` is ordinary least squares.
/// Columns with at most two distinct values enter linearly; constant columns
/// are dropped.
pub fn fit_additive_spline(x: &DMatrix<f64>, y: &[f64], knots_per_dim: usize) -> Result<SplineModel> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::InvalidInput("spline: length mismatch".into()));
    }
    let needed = d * (knots_per_dim + 3);
    if n <= needed {
        return Err(Error::InsufficientData { needed: needed + 1, got: n });
    }
    let mut columns = Vec::new();
    for j in 0..d {
        let mut v: Vec<f64> = x.column(j).iter().copied().collect();
        v.sort_by(f64::total_cmp);
        let uniq = unique_count(&v);
        if uniq <= 1 {
            continue;
        }
        let mut knots = Vec::new();
        if uniq > 2 && knots_per_dim > 0 {
            let m = knots_per_dim + 1;
            knots = (0..=m).map(|q| quantile_sorted(&v, q as f64 / m as f64)).collect();
            knots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
            if knots.len() < 3 {
                knots.clear();
            }
        }
        columns.push(ColumnBasis { column: j, knots });
    }
    let p = 1 + columns.iter().map(|c| 1 + c.n_nonlinear()).sum::<usize>();
    let mut penalized = vec![false; p];
    let mut pos = 1;
    for c in &columns {
        pos += 1;
        for _ in 0..c.n_nonlinear() {
            penalized[pos] = true;
            pos += 1;
        }
    }
    let mut model = SplineModel { columns, coef: DVector::zeros(p) };
    let mut basis = DMatrix::zeros(n, p);
    for i in 0..n {
        for (k, v) in model.expand(x, i).into_iter().enumerate() {
            basis[(i, k)] = v;
        }
    }
    let (mut gram, rhs) = linalg::weighted_normal_equations(&basis, y, None);
    for k in 0..p {
        if penalized[k] {
            gram[(k, k)] += RIDGE * n as f64;
        }
    }
    model.coef = linalg::solve_spd(&gram, &rhs)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::linear::{fit_least_squares, with_intercept};
    use crate::seed;
    use rand::Rng;

    fn rss(pred: &[f64], y: &[f64]) -> f64 {
        pred.iter().zip(y).map(|(p, v)| (p - v).powi(2)).sum()
    }

    #[test]
    fn beats_linear_on_quadratic() {
        let mut rng = seed::rng(5);
        let n = 400;
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let y: Vec<f64> = (0..n).map(|i| x[(i, 0)].powi(2) + 0.1 * (rng.random::<f64>() - 0.5)).collect();
        let spline = fit_additive_spline(&x, &y, 4).unwrap();
        let lin = fit_least_squares(&with_intercept(&x), &y, &vec![1.0; n]).unwrap();
        let lin_pred: Vec<f64> = (0..n).map(|i| lin[0] + lin[1] * x[(i, 0)]).collect();
        assert!(rss(&spline.predict(&x), &y) < 0.2 * rss(&lin_pred, &y));
    }

    #[test]
    fn constant_response_is_reproduced() {
        let mut rng = seed::rng(6);
        let x = DMatrix::from_fn(60, 2, |_, _| rng.random::<f64>());
        let y = vec![3.25; 60];
        let m = fit_additive_spline(&x, &y, 3).unwrap();
        let grid = DMatrix::from_fn(7, 2, |i, j| i as f64 * 0.3 - 0.4 + j as f64);
        for p in m.predict(&grid) {
            assert!((p - 3.25).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_knots_is_linear_fit() {
        let mut rng = seed::rng(7);
        let n = 50;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
        let y: Vec<f64> = (0..n).map(|i| 1.0 + 2.0 * x[(i, 0)] - x[(i, 1)].sin() + rng.random::<f64>()).collect();
        let m = fit_additive_spline(&x, &y, 0).unwrap();
        let lin = fit_least_squares(&with_intercept(&x), &y, &vec![1.0; n]).unwrap();
        for k in 0..3 {
            assert!((m.coef[k] - lin[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn natural_basis_is_linear_beyond_boundary() {
        let c = ColumnBasis { column: 0, knots: vec![0.0, 0.3, 0.6, 1.0] };
        let at = |x: f64| {
            let mut v = Vec::new();
            c.push_terms(x, &mut v);
            v
        };
        let (a, b, m) = (at(1.5), at(2.5), at(2.0));
        for k in 0..a.len() {
            assert!((m[k] - 0.5 * (a[k] + b[k])).abs() < 1e-9);
        }
    }

    #[test]
    fn needs_enough_rows() {
        let x = DMatrix::from_fn(10, 2, |i, j| (i * (j + 1)) as f64);
        assert!(matches!(
            fit_additive_spline(&x, &[0.0; 10], 3),
            Err(Error::InsufficientData { .. })
        ));
    }
}
