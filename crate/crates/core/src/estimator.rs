//! Residualized two-stage Q-learning with sandwich inference.
//!
//! Stage 2 regresses `Y − μ̂₂Y` on `(A₂ − μ̂₂A)·S`; stage 1 regresses the
//! pseudo-outcome minus `μ̂₁Y` on `(A₁ − μ̂₁A)·W`. Both Gram matrices are
//! normalized by the full sample size `n`, including rows whose S is zero.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::crossfit::{self, crossfit_one, make_folds, Nuisance, NuisanceSpecs};
use crate::data::{build_design_matrices, Dataset, DesignMatrices, NuisanceEstimates, StageDesign, StageFit};
use crate::error::{Error, Result};
use crate::linalg;
use crate::seed;

/// How the stage-1 outcome replaces the observed stage-2 action by the
/// estimated optimal one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PseudoMode {
    /// `Y + Sᵀβ̂₂ {I(Sᵀβ̂₂ > 0) − A₂}`
    #[default]
    Observed,
    /// `μ̂₂Y + Sᵀβ̂₂ {I(Sᵀβ̂₂ > 0) − μ̂₂A}`
    Model,
}

/// Linear decision rules for both stages.
#[derive(Debug, Clone, PartialEq)]
pub struct Regime {
    pub beta1: DVector<f64>,
    pub beta2: DVector<f64>,
}

impl Regime {
    pub fn new(beta1: DVector<f64>, beta2: DVector<f64>) -> Self {
        Regime { beta1, beta2 }
    }

    /// Treat (1) exactly when the linear score is positive; a zero score gives 0.
    pub fn decide(&self, w: &[f64], s: &[f64]) -> Result<(u8, u8)> {
        Ok((action(self.beta1.as_slice(), w)?, action(self.beta2.as_slice(), s)?))
    }
}

pub fn decide(regime: &Regime, w: &[f64], s: &[f64]) -> Result<(u8, u8)> {
    regime.decide(w, s)
}

fn action(beta: &[f64], x: &[f64]) -> Result<u8> {
    if beta.len() != x.len() {
        return Err(Error::InvalidInput(format!(
            "decision: {} coefficients but {} features",
            beta.len(),
            x.len()
        )));
    }
    Ok(u8::from(dot(beta, x) > 0.0))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn indicator(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn stage_error(stage: u8, e: Error) -> Error {
    match e {
        Error::SingularDesign { condition } => Error::SingularStage { stage, condition },
        other => other,
    }
}

/// `V̂⁻¹ Q̂ V̂⁻¹ / n`, symmetrized.
pub fn sandwich_cov(vhat: &DMatrix<f64>, qhat: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    if n == 0 || vhat.shape() != qhat.shape() || !vhat.is_square() {
        return Err(Error::InvalidInput("sandwich: mismatched matrices or n = 0".into()));
    }
    let inv = linalg::inverse_spd(vhat)?;
    Ok(linalg::symmetrize(&(&inv * qhat * &inv / n as f64)))
}

/// `β̂ ± z_{(1+level)/2}·se` per component.
pub fn wald_ci(beta: &[f64], se: &[f64], level: f64) -> Result<Vec<(f64, f64)>> {
    if beta.len() != se.len() {
        return Err(Error::InvalidInput("wald_ci: length mismatch".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("confidence level {level} must lie in (0, 1)")));
    }
    if se.iter().any(|&s| !(s >= 0.0)) {
        return Err(Error::InvalidInput("wald_ci: standard errors must be nonnegative".into()));
    }
    let z = normal_quantile(0.5 + level / 2.0);
    Ok(beta.iter().zip(se).map(|(&b, &s)| (b - z * s, b + z * s)).collect())
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

/// One residualized least-squares stage: `resp ≈ Zβ` with `Z` rows already
/// scaled by the centered treatment. Returns (β, V̂, per-row scores Zᵢ·êᵢ).
fn residualized_fit(z: &DMatrix<f64>, resp: &[f64], stage: u8) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = z.nrows() as f64;
    let (gram, rhs) = linalg::weighted_normal_equations(z, resp, None);
    let beta = linalg::solve_spd(&gram, &rhs).map_err(|e| stage_error(stage, e))?;
    let fitted = z * &beta;
    let mut scores = z.clone();
    for i in 0..z.nrows() {
        let e = resp[i] - fitted[i];
        scores.row_mut(i).scale_mut(e);
    }
    Ok((beta, gram / n, scores))
}

fn finish(beta: DVector<f64>, vhat: DMatrix<f64>, qhat: DMatrix<f64>, khat: Option<DMatrix<f64>>, n: usize, n_used: usize, stage: u8) -> Result<StageFit> {
    let cov = sandwich_cov(&vhat, &qhat, n).map_err(|e| stage_error(stage, e))?;
    let se = DVector::from_iterator(cov.nrows(), (0..cov.nrows()).map(|j| cov[(j, j)].max(0.0).sqrt()));
    Ok(StageFit { beta, vhat: linalg::symmetrize(&vhat), qhat, khat, cov, se, n_used })
}

fn stage2_design(data: &Dataset, dm: &DesignMatrices, nuis: &NuisanceEstimates) -> (DMatrix<f64>, Vec<f64>) {
    let n = data.n();
    let mut z = dm.s.clone();
    let mut resp = vec![0.0; n];
    for i in 0..n {
        match data.a2()[i] {
            Some(a2) => {
                z.row_mut(i).scale_mut(f64::from(a2) - nuis.mu2a[i]);
                resp[i] = data.y()[i] - nuis.mu2y[i];
            }
            None => z.row_mut(i).fill(0.0),
        }
    }
    (z, resp)
}

/// Stage-2 scores `Ĵ₂ᵢ = (A₂ᵢ − μ̂₂Aᵢ) Sᵢ êᵢ` at a given β̂₂ (zero rows for missing A₂).
pub fn stage2_scores(data: &Dataset, dm: &DesignMatrices, nuis: &NuisanceEstimates, beta2: &DVector<f64>) -> DMatrix<f64> {
    let (z, resp) = stage2_design(data, dm, nuis);
    let fitted = &z * beta2;
    let mut scores = z;
    for i in 0..scores.nrows() {
        scores.row_mut(i).scale_mut(resp[i] - fitted[i]);
    }
    scores
}

fn check_inputs(data: &Dataset, dm: &DesignMatrices, nuis: &NuisanceEstimates) -> Result<()> {
    let n = data.n();
    nuis.validate(n)?;
    if dm.s.nrows() != n || dm.w.nrows() != n {
        return Err(Error::InvalidInput("design matrices do not match the dataset".into()));
    }
    Ok(())
}

/// Residualized stage-2 least squares with plug-in sandwich covariance.
pub fn fit_stage2(data: &Dataset, dm: &DesignMatrices, nuis: &NuisanceEstimates) -> Result<StageFit> {
    check_inputs(data, dm, nuis)?;
    let n = data.n();
    let (z, resp) = stage2_design(data, dm, nuis);
    let (beta, vhat, scores) = residualized_fit(&z, &resp, 2)?;
    let qhat = linalg::outer_sum(&scores) / n as f64;
    let n_used = data.a2().iter().filter(|a| a.is_some()).count();
    finish(beta, vhat, qhat, None, n, n_used, 2)
}

/// Stage-1 outcome with the observed stage-2 action replaced by the one the
/// fitted rule recommends. Rows without an observed A₂ keep `Y` (their S row
/// is zero, so the correction vanishes).
pub fn pseudo_outcome(data: &Dataset, dm: &DesignMatrices, beta2: &DVector<f64>, nuis: &NuisanceEstimates, mode: PseudoMode) -> Result<Vec<f64>> {
    if beta2.len() != dm.s.ncols() {
        return Err(Error::InvalidInput("pseudo-outcome: β₂ does not match S".into()));
    }
    if let Some(j) = beta2.iter().position(|b| !b.is_finite()) {
        return Err(Error::NonFinite { row: j, what: "stage-2 coefficient".into() });
    }
    let score = &dm.s * beta2;
    Ok((0..data.n())
        .map(|i| {
            let Some(a2) = data.a2()[i] else {
                return data.y()[i];
            };
            let blip = score[i];
            match mode {
                PseudoMode::Observed => data.y()[i] + blip * (indicator(blip) - f64::from(a2)),
                PseudoMode::Model => nuis.mu2y[i] + blip * (indicator(blip) - nuis.mu2a[i]),
            }
        })
        .collect())
}

/// Residualized stage-1 least squares. The covariance accounts for the
/// estimated β̂₂ through `K̂ V̂₂⁻¹ Ĵ₂`.
pub fn fit_stage1(
    data: &Dataset,
    dm: &DesignMatrices,
    pseudo: &[f64],
    nuis: &NuisanceEstimates,
    stage2: &StageFit,
    mode: PseudoMode,
) -> Result<StageFit> {
    check_inputs(data, dm, nuis)?;
    let n = data.n();
    if pseudo.len() != n {
        return Err(Error::InvalidInput("pseudo-outcome has wrong length".into()));
    }
    let mut z = dm.w.clone();
    let mut resp = vec![0.0; n];
    for i in 0..n {
        z.row_mut(i).scale_mut(f64::from(data.a1()[i]) - nuis.mu1a[i]);
        resp[i] = pseudo[i] - nuis.mu1y[i];
    }
    let (beta, vhat, j1) = residualized_fit(&z, &resp, 1)?;

    let score2 = &dm.s * &stage2.beta;
    let (d1, d2) = (dm.w.ncols(), dm.s.ncols());
    let mut khat = DMatrix::zeros(d1, d2);
    for i in 0..n {
        let Some(a2) = data.a2()[i] else { continue };
        let gap = match mode {
            PseudoMode::Observed => indicator(score2[i]) - f64::from(a2),
            PseudoMode::Model => indicator(score2[i]) - nuis.mu2a[i],
        };
        let c = (f64::from(data.a1()[i]) - nuis.mu1a[i]) * gap;
        if c == 0.0 {
            continue;
        }
        for a in 0..d1 {
            let wa = c * dm.w[(i, a)];
            for b in 0..d2 {
                khat[(a, b)] += wa * dm.s[(i, b)];
            }
        }
    }
    khat /= n as f64;

    let j2 = stage2_scores(data, dm, nuis, &stage2.beta);
    let v2_inv = linalg::inverse_spd(&stage2.vhat).map_err(|e| stage_error(2, e))?;
    // Row i of the combined score is J₁ᵢ + K̂ V̂₂⁻¹ J₂ᵢ.
    let combined = j1 + j2 * (&khat * v2_inv).transpose();
    let qhat = linalg::outer_sum(&combined) / n as f64;
    finish(beta, vhat, qhat, Some(khat), n, n, 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustQConfig {
    pub specs: NuisanceSpecs,
    pub k_folds: usize,
    pub clip_eps: f64,
    pub mode: PseudoMode,
    pub seed: u64,
}

impl Default for RobustQConfig {
    fn default() -> Self {
        RobustQConfig {
            specs: NuisanceSpecs::default(),
            k_folds: crossfit::DEFAULT_K_FOLDS,
            clip_eps: crossfit::DEFAULT_CLIP_EPS,
            mode: PseudoMode::Observed,
            seed: 0,
        }
    }
}

impl RobustQConfig {
    pub fn with_specs(specs: NuisanceSpecs) -> Self {
        RobustQConfig { specs, ..Default::default() }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustQResult {
    pub stage2: StageFit,
    pub stage1: StageFit,
    pub pseudo_outcome: Vec<f64>,
    pub nuisances: NuisanceEstimates,
    pub design: StageDesign,
}

impl RobustQResult {
    pub fn regime(&self) -> Regime {
        Regime::new(self.stage1.beta.clone(), self.stage2.beta.clone())
    }
}

/// Full backward pass: cross-fit μ̂₂Y, μ̂₂A and μ̂₁A, fit stage 2, build the
/// pseudo-outcome, cross-fit μ̂₁Y against it on the same folds, fit stage 1.
pub fn fit_robust_q(data: &Dataset, design: &StageDesign, config: &RobustQConfig) -> Result<RobustQResult> {
    crossfit::check_clip(config.clip_eps)?;
    config.specs.validate()?;
    let dm = build_design_matrices(data, design)?;
    let plan = make_folds(data.n(), config.k_folds, seed::derive(config.seed, &[1]))?;
    let nseed = seed::derive(config.seed, &[2]);
    let run = |which, target| {
        crossfit_one(which, data, &dm, config.specs.get(which), &plan, config.clip_eps, nseed, target)
    };
    let mut nuis = NuisanceEstimates {
        mu2y: run(Nuisance::Mu2Y, None)?,
        mu2a: run(Nuisance::Mu2A, None)?,
        mu1a: run(Nuisance::Mu1A, None)?,
        mu1y: vec![0.0; data.n()],
        fold_of: plan.assignment.clone(),
        clip_eps: config.clip_eps,
    };
    let stage2 = fit_stage2(data, &dm, &nuis)?;
    let pseudo = pseudo_outcome(data, &dm, &stage2.beta, &nuis, config.mode)?;
    nuis.mu1y = run(Nuisance::Mu1Y, Some(&pseudo))?;
    let stage1 = fit_stage1(data, &dm, &pseudo, &nuis, &stage2, config.mode)?;
    Ok(RobustQResult { stage2, stage1, pseudo_outcome: pseudo, nuisances: nuis, design: design.clone() })
}

/// Both stages on caller-supplied nuisances (e.g. the true conditional means).
/// `nuis.mu1y` must already target the pseudo-outcome this fit will produce.
pub fn fit_with_nuisances(data: &Dataset, design: &StageDesign, nuis: &NuisanceEstimates, mode: PseudoMode) -> Result<RobustQResult> {
    let dm = build_design_matrices(data, design)?;
    let stage2 = fit_stage2(data, &dm, nuis)?;
    let pseudo = pseudo_outcome(data, &dm, &stage2.beta, nuis, mode)?;
    let stage1 = fit_stage1(data, &dm, &pseudo, nuis, &stage2, mode)?;
    Ok(RobustQResult { stage2, stage1, pseudo_outcome: pseudo, nuisances: nuis.clone(), design: design.clone() })
}
