//! Fold plans and cross-fitted nuisance predictions.
//!
//! Row `i` in fold `k` is always predicted by a model trained on rows outside
//! fold `k`; all folds then feed one pooled estimating equation.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::data::{clip_probability, Dataset, DesignMatrices, NuisanceEstimates};
use crate::error::{Error, Result};
use crate::learners::{LearnerSpec, Task};
use crate::seed;

pub const DEFAULT_K_FOLDS: usize = 2;
pub const DEFAULT_CLIP_EPS: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn fold_size(&self, fold: usize) -> usize {
        self.assignment.iter().filter(|&&f| f == fold).count()
    }

    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignment[i] == fold).collect()
    }

    /// (complement, fold) row indices, both ascending.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.n()).partition(|&i| self.assignment[i] != fold)
    }
}

/// Random balanced partition: a seeded permutation dealt round-robin, so fold
/// sizes differ by at most one.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::InvalidInput(format!("fold count {k} must lie in 2..={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % k;
    }
    Ok(FoldPlan { k, assignment, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nuisance {
    /// P(A₁ = 1 | W⁰)
    Mu1A,
    /// P(A₂ = 1 | S⁰), trained on rows with observed A₂
    Mu2A,
    /// E(pseudo-outcome | W⁰)
    Mu1Y,
    /// E(Y | S⁰), trained on rows with observed A₂
    Mu2Y,
}

impl Nuisance {
    pub fn name(self) -> &'static str {
        match self {
            Nuisance::Mu1A => "mu1a",
            Nuisance::Mu2A => "mu2a",
            Nuisance::Mu1Y => "mu1y",
            Nuisance::Mu2Y => "mu2y",
        }
    }

    pub fn task(self) -> Task {
        match self {
            Nuisance::Mu1A | Nuisance::Mu2A => Task::Probability,
            Nuisance::Mu1Y | Nuisance::Mu2Y => Task::Regression,
        }
    }

    fn id(self) -> u64 {
        self as u64
    }
}

/// Learner choice for each nuisance regression.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceSpecs {
    pub mu1a: LearnerSpec,
    pub mu2a: LearnerSpec,
    pub mu1y: LearnerSpec,
    pub mu2y: LearnerSpec,
}

impl NuisanceSpecs {
    /// The same named library for every nuisance (see [`LearnerSpec::preset`]).
    /// A [`LearnerSpec::preset`] name applied to all four nuisances, or
    /// `rf-gam`: forests for the outcome means, splines for the propensities.
    pub fn preset(name: &str) -> Result<Self> {
        if name == "rf-gam" {
            return Ok(Self::split(LearnerSpec::forest(), LearnerSpec::spline()));
        }
        let outcome = LearnerSpec::preset(name, Task::Regression)?;
        let treatment = LearnerSpec::preset(name, Task::Probability)?;
        Ok(Self::split(outcome, treatment))
    }

    pub fn split(outcome: LearnerSpec, treatment: LearnerSpec) -> Self {
        NuisanceSpecs { mu1a: treatment.clone(), mu2a: treatment, mu1y: outcome.clone(), mu2y: outcome }
    }

    pub fn get(&self, which: Nuisance) -> &LearnerSpec {
        match which {
            Nuisance::Mu1A => &self.mu1a,
            Nuisance::Mu2A => &self.mu2a,
            Nuisance::Mu1Y => &self.mu1y,
            Nuisance::Mu2Y => &self.mu2y,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for which in [Nuisance::Mu1A, Nuisance::Mu2A, Nuisance::Mu1Y, Nuisance::Mu2Y] {
            self.get(which).validate(which.task())?;
        }
        Ok(())
    }
}

impl Default for NuisanceSpecs {
    fn default() -> Self {
        Self::preset("default").expect("default preset exists")
    }
}

/// Cross-fit one nuisance. `target` overrides the default training label (A₁,
/// A₂, Y, Y); stage-2 nuisances train only on rows with observed A₂ and predict
/// every row of the held-out fold. Treatment predictions are clipped to
/// `[clip_eps, 1 − clip_eps]`.
#[allow(clippy::too_many_arguments)]
pub fn crossfit_one(
    which: Nuisance,
    data: &Dataset,
    dm: &DesignMatrices,
    spec: &LearnerSpec,
    plan: &FoldPlan,
    clip_eps: f64,
    seed: u64,
    target: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = data.n();
    if plan.n() != n {
        return Err(Error::InvalidInput(format!("fold plan covers {} rows, data has {n}", plan.n())));
    }
    let observed = data.a2_observed();
    let (x, default_target, eligible): (&DMatrix<f64>, Vec<f64>, Vec<bool>) = match which {
        Nuisance::Mu1A => (&dm.w0, data.a1().iter().map(|&a| f64::from(a)).collect(), vec![true; n]),
        Nuisance::Mu1Y => (&dm.w0, data.y().to_vec(), vec![true; n]),
        Nuisance::Mu2A => (
            &dm.s0,
            data.a2().iter().map(|a| a.map_or(0.0, f64::from)).collect(),
            observed.clone(),
        ),
        Nuisance::Mu2Y => (&dm.s0, data.y().to_vec(), observed.clone()),
    };
    let labels = target.unwrap_or(&default_target);
    if labels.len() != n {
        return Err(Error::InvalidInput(format!("{} target has wrong length", which.name())));
    }
    let task = which.task();
    let mut out = vec![0.0; n];
    for fold in 0..plan.k {
        let (complement, members) = plan.split(fold);
        let train: Vec<usize> = complement.into_iter().filter(|&i| eligible[i]).collect();
        let yt: Vec<f64> = train.iter().map(|&i| labels[i]).collect();
        if yt.is_empty() {
            return Err(Error::DegenerateFold { nuisance: which.name(), fold });
        }
        if task == Task::Probability {
            let ones = yt.iter().filter(|&&v| v == 1.0).count();
            if ones == 0 || ones == yt.len() {
                return Err(Error::DegenerateFold { nuisance: which.name(), fold });
            }
        }
        let model = spec.fit(
            &x.select_rows(train.iter()),
            &yt,
            task,
            seed::derive(seed, &[which.id(), fold as u64]),
        )?;
        let pred = model.predict(&x.select_rows(members.iter()))?;
        for (&i, p) in members.iter().zip(pred) {
            out[i] = match task {
                Task::Probability => clip_probability(p, clip_eps),
                Task::Regression => p,
            };
        }
    }
    Ok(out)
}

/// All four nuisances on one fold plan. `mu1y_target` is the stage-1 outcome
/// (the pseudo-outcome in the full procedure; `Y` when `None`).
#[allow(clippy::too_many_arguments)]
pub fn crossfit_nuisances(
    data: &Dataset,
    dm: &DesignMatrices,
    specs: &NuisanceSpecs,
    plan: &FoldPlan,
    clip_eps: f64,
    seed: u64,
    mu1y_target: Option<&[f64]>,
) -> Result<NuisanceEstimates> {
    check_clip(clip_eps)?;
    let run = |which, target| crossfit_one(which, data, dm, specs.get(which), plan, clip_eps, seed, target);
    Ok(NuisanceEstimates {
        mu1a: run(Nuisance::Mu1A, None)?,
        mu2a: run(Nuisance::Mu2A, None)?,
        mu1y: run(Nuisance::Mu1Y, mu1y_target)?,
        mu2y: run(Nuisance::Mu2Y, None)?,
        fold_of: plan.assignment.clone(),
        clip_eps,
    })
}

pub fn check_clip(clip_eps: f64) -> Result<()> {
    if !(clip_eps > 0.0 && clip_eps < 0.5) {
        return Err(Error::InvalidInput(format!("clip_eps {clip_eps} must lie in (0, 0.5)")));
    }
    Ok(())
}
