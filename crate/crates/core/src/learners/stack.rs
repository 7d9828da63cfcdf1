//! Convex stacking of cross-validated base-learner predictions.

use log::warn;
use nalgebra::{DMatrix, DVector};

use super::{cross_validated_predictions, FittedModel, LearnerSpec, Task};
use crate::crossfit::make_folds;
use crate::error::{Error, Result};
use crate::seed;

/// Largest library handled by exact support enumeration.
pub const MAX_BASE_LEARNERS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct StackModel {
    pub names: Vec<String>,
    /// Simplex weights, one per base learner (failed bases carry 0).
    pub weights: Vec<f64>,
    /// Cross-validated mean squared error per base (infinite when it failed).
    pub cv_risks: Vec<f64>,
    /// Cross-validated mean squared error of the weighted combination.
    pub stack_risk: f64,
    models: Vec<Option<FittedModel>>,
}

impl StackModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.nrows()];
        for (w, m) in self.weights.iter().zip(&self.models) {
            if let (true, Some(m)) = (*w > 0.0, m) {
                for (o, p) in out.iter_mut().zip(m.predict(x)?) {
                    *o += w * p;
                }
            }
        }
        Ok(out)
    }
}

fn squared_error(z: &DMatrix<f64>, y: &[f64], w: &[f64]) -> f64 {
    (0..z.nrows())
        .map(|i| {
            let p: f64 = (0..z.ncols()).map(|k| z[(i, k)] * w[k]).sum();
            (y[i] - p).powi(2)
        })
        .sum()
}

/// Minimize `‖y − Z w‖²` over the probability simplex. The minimizer lies in the
/// relative interior of some face, where it solves the equality-constrained
/// problem on that face's support, so enumerating supports is exact.
pub fn simplex_least_squares(z: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let b = z.ncols();
    assert!(b >= 1 && b <= MAX_BASE_LEARNERS);
    let gram = z.tr_mul(z);
    let cross = z.tr_mul(&DVector::from_column_slice(y));
    let mut best_w = vec![0.0; b];
    best_w[0] = 1.0;
    let mut best = squared_error(z, y, &best_w);
    for mask in 1u32..(1 << b) {
        let support: Vec<usize> = (0..b).filter(|k| mask & (1 << k) != 0).collect();
        let s = support.len();
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        let mut rhs = DVector::zeros(s + 1);
        for (a, &i) in support.iter().enumerate() {
            for (c, &j) in support.iter().enumerate() {
                kkt[(a, c)] = gram[(i, j)];
            }
            kkt[(a, s)] = 1.0;
            kkt[(s, a)] = 1.0;
            rhs[a] = cross[i];
        }
        rhs[s] = 1.0;
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        if (0..s).any(|a| !sol[a].is_finite() || sol[a] < -1e-10) {
            continue;
        }
        let mut w = vec![0.0; b];
        for (a, &i) in support.iter().enumerate() {
            w[i] = sol[a].max(0.0);
        }
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            continue;
        }
        w.iter_mut().for_each(|v| *v /= total);
        let risk = squared_error(z, y, &w);
        if risk < best {
            best = risk;
            best_w = w;
        }
    }
    best_w
}

/// V-fold super learner: cross-validated predictions per base, simplex-weighted
/// least squares stacking, then refits of the bases that received weight.
pub fn fit_super_learner(
    x: &DMatrix<f64>,
    y: &[f64],
    base: &[LearnerSpec],
    v_folds: usize,
    task: Task,
    seed: u64,
) -> Result<StackModel> {
    if base.is_empty() || base.len() > MAX_BASE_LEARNERS {
        return Err(Error::InvalidInput(format!(
            "super learner: need 1..={MAX_BASE_LEARNERS} base learners"
        )));
    }
    let n = x.nrows();
    let plan = make_folds(n, v_folds, seed::derive(seed, &[u64::MAX]))?;
    let names: Vec<String> = base.iter().map(LearnerSpec::name).collect();
    let mut cv_risks = vec![f64::INFINITY; base.len()];
    let mut ok = Vec::new();
    let mut columns = Vec::new();
    for (b, spec) in base.iter().enumerate() {
        match cross_validated_predictions(spec, x, y, task, &plan, seed::derive(seed, &[b as u64])) {
            Ok(pred) => {
                cv_risks[b] = pred.iter().zip(y).map(|(p, v)| (p - v).powi(2)).sum::<f64>() / n as f64;
                ok.push(b);
                columns.push(pred);
            }
            Err(e) => warn!("super learner: base {} failed during cross-validation: {e}", names[b]),
        }
    }
    if ok.is_empty() {
        return Err(Error::AllLearnersFailed(names.join(", ")));
    }
    let z = DMatrix::from_fn(n, ok.len(), |i, k| columns[k][i]);
    let sub = simplex_least_squares(&z, y);
    let stack_risk = squared_error(&z, y, &sub) / n as f64;
    let mut weights = vec![0.0; base.len()];
    let mut models: Vec<Option<FittedModel>> = vec![None; base.len()];
    for (k, &b) in ok.iter().enumerate() {
        if sub[k] <= 0.0 {
            continue;
        }
        match base[b].fit(x, y, task, seed::derive(seed, &[b as u64, u64::MAX])) {
            Ok(m) => {
                weights[b] = sub[k];
                models[b] = Some(m);
            }
            Err(e) => warn!("super learner: base {} failed on the full sample: {e}", names[b]),
        }
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::AllLearnersFailed(names.join(", ")));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(StackModel { names, weights, cv_risks, stack_risk, models })
}
