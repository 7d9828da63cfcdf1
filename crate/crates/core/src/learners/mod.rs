//! Regression and probability learners used for nuisance estimation.
//!
//! Every learner is fit through [`LearnerSpec::fit`] and returns a
//! [`FittedModel`] whose predictions are pure. Probability-task predictions are
//! clamped to `[0, 1]`.

pub mod forest;
pub mod kernel;
pub mod linear;
pub mod logistic;
pub mod spline;
pub mod stack;

use std::fmt;

use nalgebra::DMatrix;

use crate::crossfit::{make_folds, FoldPlan};
use crate::error::{Error, Result};
use crate::seed;

pub use forest::{fit_random_forest, ForestModel, ForestParams};
pub use kernel::{fit_kernel_smoother, KernelModel};
pub use linear::{fit_least_squares, LinearModel};
pub use logistic::{fit_logistic_irls, LogisticFit, LogisticModel};
pub use spline::{fit_additive_spline, SplineModel};
pub use stack::{fit_super_learner, simplex_least_squares, StackModel};

pub const DEFAULT_SPLINE_KNOTS: usize = 4;
pub const DEFAULT_V_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    /// Binary 0/1 targets; predictions estimate P(y = 1).
    Probability,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LearnerSpec {
    /// Intercept only.
    Mean,
    Linear,
    Logistic,
    AdditiveSpline { knots_per_dim: usize },
    Kernel,
    RandomForest(ForestParams),
    SuperLearner { base: Vec<LearnerSpec>, v_folds: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Mean(f64),
    Linear(LinearModel),
    Logistic(LogisticModel),
    Spline(SplineModel),
    Kernel(KernelModel),
    Forest(ForestModel),
    Stack(StackModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub task: Task,
    pub dim: usize,
    pub model: Model,
}

impl FittedModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.dim {
            return Err(Error::InvalidInput(format!(
                "predict: model has {} features, input has {}",
                self.dim,
                x.ncols()
            )));
        }
        let mut out = match &self.model {
            Model::Mean(m) => vec![*m; x.nrows()],
            Model::Linear(m) => m.predict(x),
            Model::Logistic(m) => m.predict(x),
            Model::Spline(m) => m.predict(x),
            Model::Kernel(m) => m.predict(x),
            Model::Forest(m) => m.predict(x),
            Model::Stack(m) => m.predict(x)?,
        };
        if self.task == Task::Probability {
            out.iter_mut().for_each(|p| *p = p.clamp(0.0, 1.0));
        }
        Ok(out)
    }
}

impl LearnerSpec {
    /// Linear regression or logistic regression, whichever matches the task.
    pub fn glm(task: Task) -> Self {
        match task {
            Task::Regression => LearnerSpec::Linear,
            Task::Probability => LearnerSpec::Logistic,
        }
    }

    pub fn forest() -> Self {
        LearnerSpec::RandomForest(ForestParams::default())
    }

    pub fn spline() -> Self {
        LearnerSpec::AdditiveSpline { knots_per_dim: DEFAULT_SPLINE_KNOTS }
    }

    /// Named learner libraries:
    ///
    /// | name | library |
    /// |---|---|
    /// | `default` | stack of glm, spline, kernel, forest |
    /// | `fast` | stack of glm, spline, kernel |
    /// | `rf` | forest |
    /// | `gam` | spline |
    /// | `parametric` | glm |
    pub fn preset(name: &str, task: Task) -> Result<Self> {
        let sl = |base| LearnerSpec::SuperLearner { base, v_folds: DEFAULT_V_FOLDS };
        Ok(match name {
            "default" => sl(vec![Self::glm(task), Self::spline(), LearnerSpec::Kernel, Self::forest()]),
            "fast" => sl(vec![Self::glm(task), Self::spline(), LearnerSpec::Kernel]),
            "rf" => Self::forest(),
            "gam" => Self::spline(),
            "parametric" => Self::glm(task),
            other => return Err(Error::Config(format!("unknown learner preset '{other}'"))),
        })
    }

    /// Parse a learner expression. A bare preset name is accepted; otherwise
    /// `mean`, `glm`, `linear`, `logistic`, `kernel`, `spline` / `spline(K)`,
    /// `rf` / `rf(trees=N, mtry=M, min_leaf=L, depth=D, bootstrap=false)`, or
    /// `sl(v=V, <learner>, <learner>, ...)`.
    pub fn parse(text: &str, task: Task) -> Result<Self> {
        let text = text.trim();
        if let Ok(p) = Self::preset(text, task) {
            return Ok(p);
        }
        let (head, args) = match text.find('(') {
            Some(open) => {
                if !text.ends_with(')') {
                    return Err(Error::Config(format!("unbalanced parentheses in '{text}'")));
                }
                (text[..open].trim(), Some(split_top_level(&text[open + 1..text.len() - 1])?))
            }
            None => (text, None),
        };
        let bad = |msg: &str| Error::Config(format!("learner '{text}': {msg}"));
        let spec = match (head, args) {
            ("mean", None) => LearnerSpec::Mean,
            ("glm", None) => Self::glm(task),
            ("linear", None) => LearnerSpec::Linear,
            ("logistic", None) => LearnerSpec::Logistic,
            ("kernel", None) => LearnerSpec::Kernel,
            ("spline", None) => Self::spline(),
            ("spline", Some(a)) if a.len() == 1 => LearnerSpec::AdditiveSpline {
                knots_per_dim: a[0].parse().map_err(|_| bad("knots must be an integer"))?,
            },
            ("rf", None) => Self::forest(),
            ("rf", Some(a)) => {
                let mut p = ForestParams::default();
                for item in a.iter().filter(|s| !s.is_empty()) {
                    let (k, v) = item.split_once('=').ok_or_else(|| bad("expected key=value"))?;
                    let int = || v.trim().parse::<usize>().map_err(|_| bad("expected an integer"));
                    match k.trim() {
                        "trees" => p.n_trees = int()?,
                        "mtry" => p.mtry = Some(int()?),
                        "min_leaf" => p.min_leaf = int()?,
                        "depth" => p.max_depth = Some(int()?),
                        "bootstrap" => {
                            p.bootstrap = v.trim().parse().map_err(|_| bad("bootstrap must be true/false"))?
                        }
                        other => return Err(bad(&format!("unknown forest option '{other}'"))),
                    }
                }
                LearnerSpec::RandomForest(p)
            }
            ("sl", Some(a)) => {
                let mut v_folds = DEFAULT_V_FOLDS;
                let mut base = Vec::new();
                for item in a {
                    match item.split_once('=') {
                        Some((k, v)) if k.trim() == "v" && !item.contains('(') => {
                            v_folds = v.trim().parse().map_err(|_| bad("v must be an integer"))?
                        }
                        _ => base.push(Self::parse(&item, task)?),
                    }
                }
                LearnerSpec::SuperLearner { base, v_folds }
            }
            _ => return Err(bad("unrecognized learner")),
        };
        spec.validate(task)?;
        Ok(spec)
    }

    pub fn name(&self) -> String {
        match self {
            LearnerSpec::Mean => "mean".into(),
            LearnerSpec::Linear => "linear".into(),
            LearnerSpec::Logistic => "logistic".into(),
            LearnerSpec::AdditiveSpline { knots_per_dim } => format!("spline({knots_per_dim})"),
            LearnerSpec::Kernel => "kernel".into(),
            LearnerSpec::RandomForest(p) => {
                let mut s = format!("rf(trees={}, min_leaf={}", p.n_trees, p.min_leaf);
                if let Some(m) = p.mtry {
                    s += &format!(", mtry={m}");
                }
                if let Some(d) = p.max_depth {
                    s += &format!(", depth={d}");
                }
                if !p.bootstrap {
                    s += ", bootstrap=false";
                }
                s + ")"
            }
            LearnerSpec::SuperLearner { base, v_folds } => {
                let inner: Vec<String> = base.iter().map(LearnerSpec::name).collect();
                format!("sl(v={v_folds}, {})", inner.join(", "))
            }
        }
    }

    pub fn validate(&self, task: Task) -> Result<()> {
        match self {
            LearnerSpec::Logistic if task == Task::Regression => {
                Err(Error::InvalidInput("logistic learner needs a probability task".into()))
            }
            LearnerSpec::AdditiveSpline { knots_per_dim } if *knots_per_dim > 50 => {
                Err(Error::InvalidInput("spline: at most 50 knots per dimension".into()))
            }
            LearnerSpec::RandomForest(p) => p.validate(),
            LearnerSpec::SuperLearner { base, v_folds } => {
                if base.is_empty() || base.len() > stack::MAX_BASE_LEARNERS {
                    return Err(Error::InvalidInput(format!(
                        "super learner: need 1..={} base learners",
                        stack::MAX_BASE_LEARNERS
                    )));
                }
                if *v_folds < 2 {
                    return Err(Error::InvalidInput("super learner: v_folds must be at least 2".into()));
                }
                base.iter().try_for_each(|b| b.validate(task))
            }
            _ => Ok(()),
        }
    }

    pub fn fit(&self, x: &DMatrix<f64>, y: &[f64], task: Task, seed: u64) -> Result<FittedModel> {
        self.validate(task)?;
        let n = x.nrows();
        if y.len() != n {
            return Err(Error::InvalidInput("fit: length mismatch".into()));
        }
        if n == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, what: "learner target".into() });
        }
        if task == Task::Probability && y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidInput("probability task needs 0/1 targets".into()));
        }
        let model = match self {
            LearnerSpec::Mean => Model::Mean(y.iter().sum::<f64>() / n as f64),
            LearnerSpec::Linear => Model::Linear(LinearModel::fit(x, y)?),
            LearnerSpec::Logistic => Model::Logistic(LogisticModel::fit(x, y)?),
            LearnerSpec::AdditiveSpline { knots_per_dim } => {
                Model::Spline(fit_additive_spline(x, y, *knots_per_dim)?)
            }
            LearnerSpec::Kernel => Model::Kernel(fit_kernel_smoother(x, y)?),
            LearnerSpec::RandomForest(p) => Model::Forest(fit_random_forest(x, y, p, task, seed)?),
            LearnerSpec::SuperLearner { base, v_folds } => {
                Model::Stack(fit_super_learner(x, y, base, *v_folds, task, seed)?)
            }
        };
        Ok(FittedModel { task, dim: x.ncols(), model })
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Split on commas that are not nested inside parentheses.
fn split_top_level(s: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        if depth < 0 {
            return Err(Error::Config(format!("unbalanced parentheses in '{s}'")));
        }
        cur.push(ch);
    }
    if depth != 0 {
        return Err(Error::Config(format!("unbalanced parentheses in '{s}'")));
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    Ok(out)
}

/// Out-of-fold predictions: rows in fold `k` are predicted by a model trained
/// on the other folds with seed `derive(seed, k)`.
pub fn cross_validated_predictions(
    spec: &LearnerSpec,
    x: &DMatrix<f64>,
    y: &[f64],
    task: Task,
    plan: &FoldPlan,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = x.nrows();
    if plan.n() != n || y.len() != n {
        return Err(Error::InvalidInput("cross-validation: fold plan does not match data".into()));
    }
    let mut out = vec![0.0; n];
    for k in 0..plan.k {
        let (train, test) = plan.split(k);
        let xt = x.select_rows(train.iter());
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = spec.fit(&xt, &yt, task, seed::derive(seed, &[k as u64]))?;
        let pred = model.predict(&x.select_rows(test.iter()))?;
        for (&i, p) in test.iter().zip(pred) {
            out[i] = p;
        }
    }
    Ok(out)
}

/// Mean squared out-of-fold prediction error over a seeded `v_folds` split.
pub fn cv_risk(
    spec: &LearnerSpec,
    x: &DMatrix<f64>,
    y: &[f64],
    task: Task,
    v_folds: usize,
    seed: u64,
) -> Result<f64> {
    let n = x.nrows();
    let plan = make_folds(n, v_folds, seed::derive(seed, &[u64::MAX]))?;
    if let Some(k) = (0..plan.k).find(|&k| plan.fold_size(k) < 2) {
        return Err(Error::InvalidInput(format!("cv_risk: fold {k} has fewer than 2 rows")));
    }
    let pred = cross_validated_predictions(spec, x, y, task, &plan, seed)?;
    Ok(pred.iter().zip(y).map(|(p, v)| (p - v).powi(2)).sum::<f64>() / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn parse_round_trips_names() {
        for text in [
            "mean",
            "linear",
            "kernel",
            "spline(3)",
            "rf(trees=10, min_leaf=3, mtry=2, depth=4, bootstrap=false)",
            "sl(v=3, linear, spline(2), rf(trees=5, min_leaf=5))",
        ] {
            let spec = LearnerSpec::parse(text, Task::Regression).unwrap();
            assert_eq!(LearnerSpec::parse(&spec.name(), Task::Regression).unwrap(), spec);
        }
        assert_eq!(LearnerSpec::parse("glm", Task::Probability).unwrap(), LearnerSpec::Logistic);
        assert!(LearnerSpec::parse("logistic", Task::Regression).is_err());
        assert!(LearnerSpec::parse("sl(v=1, mean)", Task::Regression).is_err());
        assert!(LearnerSpec::parse("boosting", Task::Regression).is_err());
    }

    #[test]
    fn cv_risk_of_perfect_predictor() {
        let mut rng = seed::rng(1);
        let y: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let x = DMatrix::from_fn(50, 1, |i, _| y[i]);
        let r = cv_risk(&LearnerSpec::Linear, &x, &y, Task::Regression, 5, 3).unwrap();
        assert!(r < 1e-10);
    }

    #[test]
    fn cv_risk_of_constant_model_is_variance() {
        let mut rng = seed::rng(2);
        let n = 2000;
        let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>());
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let r = cv_risk(&LearnerSpec::Mean, &x, &y, Task::Regression, 5, 3).unwrap();
        assert!((r / var - 1.0).abs() < 0.1);
        assert_eq!(r, cv_risk(&LearnerSpec::Mean, &x, &y, Task::Regression, 5, 3).unwrap());
    }

    #[test]
    fn cv_risk_rejects_tiny_folds() {
        let x = DMatrix::from_fn(5, 1, |i, _| i as f64);
        assert!(cv_risk(&LearnerSpec::Mean, &x, &[0.0; 5], Task::Regression, 5, 0).is_err());
    }

    #[test]
    fn super_learner_prefers_linear_for_linear_truth() {
        let mut rng = seed::rng(3);
        let n = 2000;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>() - 0.5);
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 + 2.0 * x[(i, 0)] - x[(i, 1)] + 0.5 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let base = vec![LearnerSpec::Linear, LearnerSpec::Kernel];
        let m = fit_super_learner(&x, &y, &base, 5, Task::Regression, 4).unwrap();
        assert!(m.weights[0] >= 0.5, "weights {:?}", m.weights);
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m.stack_risk <= m.cv_risks.iter().cloned().fold(f64::INFINITY, f64::min) + 1e-8);
    }

    #[test]
    fn probability_predictions_are_clamped() {
        let mut rng = seed::rng(5);
        let n = 200;
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let y: Vec<f64> = (0..n).map(|i| f64::from(x[(i, 0)] > 0.3)).collect();
        let m = LearnerSpec::Linear.fit(&x, &y, Task::Probability, 0).unwrap();
        let grid = DMatrix::from_fn(5, 1, |i, _| i as f64 * 10.0 - 20.0);
        assert!(m.predict(&grid).unwrap().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn predict_checks_dimension() {
        let x = DMatrix::from_fn(12, 2, |i, j| (i + j) as f64);
        let m = LearnerSpec::Mean.fit(&x, &[1.0; 12], Task::Regression, 0).unwrap();
        assert!(m.predict(&DMatrix::zeros(3, 1)).is_err());
    }
}
