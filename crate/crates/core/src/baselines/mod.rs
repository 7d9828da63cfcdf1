//! Comparator estimators: standard linear Q-learning and dynamic weighted
//! ordinary least squares (dWOLS), with heteroskedasticity-robust (HC0)
//! standard errors and bootstrap intervals.
//!
//! Both use the linear working model `Q_j = H_jᵀb + A_j·(blip features)ᵀβ`,
//! where `H₂ = (1, S⁰)` and `H₁ = (1, W⁰)`. Stage 2 is fitted on the rows with
//! an observed A₂; the blip features are the same S and W as the residualized
//! estimator uses.

pub mod bootstrap;

use nalgebra::{DMatrix, DVector};

use crate::data::{build_design_matrices, Dataset, DesignMatrices, StageDesign};
use crate::error::{Error, Result};
use crate::estimator::{wald_ci, Regime};
use crate::learners::linear::with_intercept;
use crate::learners::logistic::{fit_logistic_irls, sigmoid};
use crate::linalg;

pub use bootstrap::{bootstrap_ci, estimate_p_hat, resample_size_m, BootstrapResult, BootstrapSpec, BootstrapVariant};

/// Per-row weights of the working-model least squares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Unit,
    /// `|A − π̂|` with π̂ a logistic regression of A on the stage history.
    AbsResidual,
}

/// How the stage-1 outcome credits the recommended stage-2 action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearPseudo {
    /// `max_a Q̂₂(H₂, a) = H₂ᵀb̂ + max(Sᵀβ̂₂, 0)`
    MaxQ,
    /// `Y + Sᵀβ̂₂ {I(Sᵀβ̂₂ > 0) − A₂}`
    Observed,
}

impl LinearPseudo {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "maxq" | "max_q" => Ok(LinearPseudo::MaxQ),
            "observed" => Ok(LinearPseudo::Observed),
            other => Err(Error::Config(format!("q pseudo-outcome must be maxq or observed, got '{other}'"))),
        }
    }
}

/// One stage of a linear working model. Only the blip block is reported;
/// `main` holds the nuisance main-effect coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingFit {
    pub beta: DVector<f64>,
    pub main: DVector<f64>,
    /// HC0 covariance of `beta`.
    pub cov: DMatrix<f64>,
    pub se: DVector<f64>,
    pub n_used: usize,
}

impl WorkingFit {
    pub fn wald_ci(&self, level: f64) -> Result<Vec<(f64, f64)>> {
        wald_ci(self.beta.as_slice(), self.se.as_slice(), level)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearQFit {
    pub stage2: WorkingFit,
    pub stage1: WorkingFit,
    pub pseudo_outcome: Vec<f64>,
}

impl LinearQFit {
    pub fn regime(&self) -> Regime {
        Regime::new(self.stage1.beta.clone(), self.stage2.beta.clone())
    }

    /// `(β̂₂, β̂₁)` concatenated, the layout bootstrap replicates use.
    pub fn coefficients(&self) -> Vec<f64> {
        self.stage2.beta.iter().chain(self.stage1.beta.iter()).copied().collect()
    }
}

/// Standard Q-learning: unweighted least squares, max-Q pseudo-outcome.
pub fn fit_standard_q(data: &Dataset, design: &StageDesign) -> Result<LinearQFit> {
    fit_linear_q(data, design, Weighting::Unit, LinearPseudo::MaxQ)
}

/// dWOLS: `|A − π̂|`-weighted least squares with the observed-action
/// pseudo-outcome, consistent for β when either the main-effect model or the
/// logistic propensity model is correct.
pub fn fit_dwols(data: &Dataset, design: &StageDesign) -> Result<LinearQFit> {
    fit_linear_q(data, design, Weighting::AbsResidual, LinearPseudo::Observed)
}

/// Shared backward pass behind [`fit_standard_q`] and [`fit_dwols`].
pub fn fit_linear_q(data: &Dataset, design: &StageDesign, weighting: Weighting, pseudo: LinearPseudo) -> Result<LinearQFit> {
    let dm = build_design_matrices(data, design)?;
    let n = data.n();
    let observed: Vec<usize> = (0..n).filter(|&i| data.a2()[i].is_some()).collect();

    // Stage 2 on rows with an observed A₂.
    let h2 = with_intercept(&dm.s0);
    let a2: Vec<f64> = observed.iter().map(|&i| f64::from(data.a2()[i].expect("observed"))).collect();
    let x2 = working_design(&h2, &dm.s, &observed, &a2);
    let y2: Vec<f64> = observed.iter().map(|&i| data.y()[i]).collect();
    let w2 = weights(weighting, &select_rows(&dm.s0, &observed), &a2)?;
    let stage2 = fit_working(&x2, &y2, w2.as_deref(), h2.ncols(), 2)?;

    let pseudo_outcome = linear_pseudo_outcome(data, &dm, &h2, &stage2, pseudo);

    let all: Vec<usize> = (0..n).collect();
    let h1 = with_intercept(&dm.w0);
    let a1: Vec<f64> = data.a1().iter().map(|&a| f64::from(a)).collect();
    let x1 = working_design(&h1, &dm.w, &all, &a1);
    let w1 = weights(weighting, &dm.w0, &a1)?;
    let stage1 = fit_working(&x1, &pseudo_outcome, w1.as_deref(), h1.ncols(), 1)?;
    Ok(LinearQFit { stage2, stage1, pseudo_outcome })
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// `[H, A·B]` restricted to `rows`.
fn working_design(h: &DMatrix<f64>, blip: &DMatrix<f64>, rows: &[usize], a: &[f64]) -> DMatrix<f64> {
    let (ph, pb) = (h.ncols(), blip.ncols());
    DMatrix::from_fn(rows.len(), ph + pb, |r, j| {
        let i = rows[r];
        if j < ph {
            h[(i, j)]
        } else {
            a[r] * blip[(i, j - ph)]
        }
    })
}

fn weights(weighting: Weighting, history: &DMatrix<f64>, a: &[f64]) -> Result<Option<Vec<f64>>> {
    match weighting {
        Weighting::Unit => Ok(None),
        Weighting::AbsResidual => {
            let x = with_intercept(history);
            let fit = fit_logistic_irls(&x, a)?;
            let pi = &x * &fit.coef;
            Ok(Some(
                a.iter()
                    .enumerate()
                    .map(|(i, &ai)| (ai - sigmoid(pi[i])).abs())
                    .collect(),
            ))
        }
    }
}

fn fit_working(x: &DMatrix<f64>, y: &[f64], w: Option<&[f64]>, n_main: usize, stage: u8) -> Result<WorkingFit> {
    let n = x.nrows();
    let d = x.ncols();
    if n <= d {
        return Err(Error::InsufficientData { needed: d, got: n });
    }
    let (gram, rhs) = linalg::weighted_normal_equations(x, y, w);
    let coef = linalg::solve_spd(&gram, &rhs).map_err(|e| match e {
        Error::SingularDesign { condition } => Error::SingularStage { stage, condition },
        other => other,
    })?;
    let fitted = x * &coef;
    let mut scores = x.clone();
    for i in 0..n {
        let wi = w.map_or(1.0, |w| w[i]);
        scores.row_mut(i).scale_mut(wi * (y[i] - fitted[i]));
    }
    let bread = linalg::inverse_spd(&gram)?;
    let cov = linalg::symmetrize(&(&bread * linalg::outer_sum(&scores) * &bread));
    let pb = d - n_main;
    let cov_b = cov.view((n_main, n_main), (pb, pb)).into_owned();
    let se = DVector::from_iterator(pb, (0..pb).map(|j| cov_b[(j, j)].max(0.0).sqrt()));
    Ok(WorkingFit {
        beta: coef.rows(n_main, pb).into_owned(),
        main: coef.rows(0, n_main).into_owned(),
        cov: cov_b,
        se,
        n_used: n,
    })
}

/// Rows without an observed A₂ were not in the stage-2 model and keep `Y`.
fn linear_pseudo_outcome(data: &Dataset, dm: &DesignMatrices, h2: &DMatrix<f64>, stage2: &WorkingFit, pseudo: LinearPseudo) -> Vec<f64> {
    let blip = &dm.s * &stage2.beta;
    let main = h2 * &stage2.main;
    (0..data.n())
        .map(|i| {
            let Some(a2) = data.a2()[i] else {
                return data.y()[i];
            };
            let opt = if blip[i] > 0.0 { 1.0 } else { 0.0 };
            match pseudo {
                LinearPseudo::MaxQ => main[i] + blip[i].max(0.0),
                LinearPseudo::Observed => data.y()[i] + blip[i] * (opt - f64::from(a2)),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Trajectory;
    use crate::seed;
    use rand::Rng as _;

    fn noiseless(n: usize, seed_: u64) -> (Dataset, StageDesign) {
        let mut rng = seed::rng(seed_);
        let rows: Vec<Trajectory> = (0..n)
            .map(|_| {
                let x1: Vec<f64> = (0..2).map(|_| rng.random::<f64>() - 0.5).collect();
                let x2: Vec<f64> = (0..2).map(|_| rng.random::<f64>() - 0.5).collect();
                let a1 = u8::from(rng.random::<bool>());
                let a2 = u8::from(rng.random::<bool>());
                // Blip₂ = 2 + 2x₂₁ > 0 everywhere and the main effect cancels its x₂₁ term,
                // so the max-Q pseudo-outcome is 2.3 + x₁₁ + 0.5a₁ exactly.
                let q2 = 0.3 + x1[0] - 2.0 * x2[0] + 0.5 * f64::from(a1);
                let y = q2 + f64::from(a2) * (2.0 + 2.0 * x2[0]);
                Trajectory { x1, a1, x2, a2: Some(a2), y, r: Some(1) }
            })
            .collect();
        let design = StageDesign::new(
            vec![crate::Feature::Intercept, crate::Feature::X2(0)],
            false,
            vec![crate::Feature::Intercept],
            2,
            2,
        );
        (Dataset::from_rows(&rows).unwrap(), design)
    }

    #[test]
    fn exact_recovery_without_noise() {
        let (data, design) = noiseless(60, 1);
        let fit = fit_standard_q(&data, &design).unwrap();
        assert!((fit.stage2.beta[0] - 2.0).abs() < 1e-8);
        assert!((fit.stage2.beta[1] - 2.0).abs() < 1e-8);
        assert!(fit.stage2.se.iter().all(|&s| s < 1e-8));
                assert!((fit.stage1.beta[0] - 0.5).abs() < 1e-8);
        assert!(fit.stage1.se[0] < 1e-8);
    }

    #[test]
    fn unit_weights_reproduce_standard_q() {
        let (data, design) = noiseless(80, 2);
        let sq = fit_standard_q(&data, &design).unwrap();
        let unit = fit_linear_q(&data, &design, Weighting::Unit, LinearPseudo::MaxQ).unwrap();
        assert_eq!(sq, unit);
        let dw_unit = fit_linear_q(&data, &design, Weighting::Unit, LinearPseudo::Observed).unwrap();
        assert_eq!(sq.stage2, dw_unit.stage2);
    }

    #[test]
    fn abs_residual_weight() {
        // Intercept-only propensity with balanced labels gives π̂ = ½.
        let h = DMatrix::zeros(4, 0);
        let w = weights(Weighting::AbsResidual, &h, &[1.0, 0.0, 1.0, 0.0]).unwrap().unwrap();
        for v in w {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_working_model_reported_by_stage() {
        let (data, _) = noiseless(40, 3);
        let design = StageDesign::new(vec![crate::Feature::Intercept, crate::Feature::Intercept], false, vec![crate::Feature::Intercept], 2, 2);
        assert!(matches!(fit_standard_q(&data, &design), Err(Error::SingularStage { stage: 2, .. })));
    }
}
