//! Logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

const MAX_ITER: usize = 100;
const SCORE_TOL: f64 = 1e-8;
const SEPARATION_RIDGE: f64 = 1e-6;
/// Linear predictors beyond this magnitude mean fitted probabilities have
/// collapsed onto 0 or 1.
const SATURATED_ETA: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coef: DVector<f64>,
    /// The unpenalized likelihood had no finite maximizer; `coef` is the
    /// ridge-stabilized fit.
    pub separated: bool,
    pub converged: bool,
    pub iterations: usize,
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn log1pexp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn penalized_loglik(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, penalty: f64) -> f64 {
    let eta = x * beta;
    let ll: f64 = eta.iter().zip(y).map(|(&e, &yi)| yi * e - log1pexp(e)).sum();
    ll - 0.5 * penalty * beta.norm_squared()
}

struct IrlsOutcome {
    beta: DVector<f64>,
    converged: bool,
    iterations: usize,
    max_eta: f64,
}

fn irls(x: &DMatrix<f64>, y: &[f64], ridge: f64) -> IrlsOutcome {
    let (n, d) = x.shape();
    let penalty = ridge * n as f64;
    let mut beta = DVector::zeros(d);
    let mut ll = penalized_loglik(x, y, &beta, penalty);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=MAX_ITER {
        iterations = it;
        let eta = x * &beta;
        let p: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let resid: Vec<f64> = y.iter().zip(&p).map(|(yi, pi)| yi - pi).collect();
        let weights: Vec<f64> = p.iter().map(|pi| pi * (1.0 - pi)).collect();
        let (mut hess, _) = linalg::weighted_normal_equations(x, &resid, Some(&weights));
        let mut score = x.tr_mul(&DVector::from_vec(resid));
        if penalty > 0.0 {
            score -= &beta * penalty;
            for j in 0..d {
                hess[(j, j)] += penalty;
            }
        }
        if score.amax() < SCORE_TOL {
            converged = true;
            break;
        }
        let Some(step) = linalg::solve_spd_unchecked(&hess, &score) else {
            break;
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &beta + &step * t;
            let cand_ll = penalized_loglik(x, y, &cand, penalty);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let max_eta = (x * &beta).amax();
    IrlsOutcome { beta, converged, iterations, max_eta }
}

/// Maximize the Bernoulli log-likelihood of `y` on the raw design `x` (add an
/// intercept column yourself). Separated data fall back to a ridge penalty of
/// 1e-6 per observation with `separated` set.
pub fn fit_logistic_irls(x: &DMatrix<f64>, y: &[f64]) -> Result<LogisticFit> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::InvalidInput("logistic: length mismatch".into()));
    }
    if n < d {
        return Err(Error::InsufficientData { needed: d - 1, got: n });
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput("logistic: labels must be 0 or 1".into()));
    }
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(Error::DegenerateLabels);
    }
    let plain = irls(x, y, 0.0);
    if plain.converged && plain.max_eta <= SATURATED_ETA {
        return Ok(LogisticFit {
            coef: plain.beta,
            separated: false,
            converged: true,
            iterations: plain.iterations,
        });
    }
    let ridge = irls(x, y, SEPARATION_RIDGE);
    Ok(LogisticFit {
        coef: ridge.beta,
        separated: true,
        converged: ridge.converged,
        iterations: ridge.iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub coef: DVector<f64>,
    pub separated: bool,
}

impl LogisticModel {
    pub fn fit(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let fit = fit_logistic_irls(&super::linear::with_intercept(x), y)?;
        Ok(LogisticModel { coef: fit.coef, separated: fit.separated })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let eta = self.coef[0]
                    + (0..x.ncols()).map(|j| self.coef[j + 1] * x[(i, j)]).sum::<f64>();
                sigmoid(eta)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn balanced_intercept_only() {
        let x = DMatrix::from_element(2, 1, 1.0);
        let fit = fit_logistic_irls(&x, &[0.0, 1.0]).unwrap();
        assert!(fit.coef[0].abs() < 1e-10);
        assert!((sigmoid(fit.coef[0]) - 0.5).abs() < 1e-10);
        assert!(!fit.separated);
    }

    #[test]
    fn separated_data_sets_flag() {
        let xs = [-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0];
        let x = DMatrix::from_fn(8, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let y: Vec<f64> = xs.iter().map(|&v| f64::from(v > 0.0)).collect();
        let fit = fit_logistic_irls(&x, &y).unwrap();
        assert!(fit.separated);
        assert!(fit.coef.iter().all(|c| c.is_finite()));
        assert!(fit.coef[1] > 0.0);
    }

    #[test]
    fn one_class_is_degenerate() {
        let x = DMatrix::from_element(3, 1, 1.0);
        assert!(matches!(fit_logistic_irls(&x, &[1.0, 1.0, 1.0]), Err(Error::DegenerateLabels)));
    }

    #[test]
    fn recovers_slope_monte_carlo() {
        let mut rng = seed::rng(11);
        let n = 5000;
        let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = xs
            .iter()
            .map(|&v| f64::from(rng.random::<f64>() < sigmoid(2.0 * v)))
            .collect();
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let fit = fit_logistic_irls(&x, &y).unwrap();
        assert!(fit.converged);
        assert!((fit.coef[1] - 2.0).abs() < 0.15, "slope {}", fit.coef[1]);
    }

    #[test]
    fn score_vanishes_at_solution() {
        let mut rng = seed::rng(3);
        let n = 300;
        let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() - 0.5 });
        let y: Vec<f64> = (0..n)
            .map(|i| f64::from(rng.random::<f64>() < sigmoid(0.3 + x[(i, 1)] - 2.0 * x[(i, 2)])))
            .collect();
        let fit = fit_logistic_irls(&x, &y).unwrap();
        let p: Vec<f64> = (0..n).map(|i| sigmoid((x.row(i) * &fit.coef)[0])).collect();
        for j in 0..3 {
            let s: f64 = (0..n).map(|i| x[(i, j)] * (y[i] - p[i])).sum();
            assert!(s.abs() < 1e-8);
        }
    }
}
