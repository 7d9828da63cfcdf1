//! Experiment orchestration, CSV ingestion and report emission.
//!
//! Every method is reduced to the same shape here: the stage-2 coefficients
//! followed by the stage-1 coefficients, plus one optional interval per
//! coefficient for each requested inference procedure.

pub mod analyze;
pub mod config;
pub mod experiment;
pub mod ingest;
pub mod report;

use std::fmt;

use crate::baselines::{bootstrap_ci, estimate_p_hat, fit_dwols, fit_linear_q, BootstrapSpec, LinearPseudo, LinearQFit, Weighting};
use crate::crossfit::{self, NuisanceSpecs};
use crate::data::{build_design_matrices, Dataset, StageDesign};
use crate::error::{Error, Result};
use crate::estimator::{fit_robust_q, PseudoMode, Regime, RobustQConfig};
use crate::seed;

pub use analyze::{analyze, AnalysisReport, AnalysisRow};
pub use config::ExperimentConfig;
pub use experiment::{run_experiment, ResultRow};
pub use ingest::{dataset_to_csv, ingest_csv, ingest_str, write_csv, Schema};
pub use report::{emit_table, OutputFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Proposed,
    StandardQ,
    Dwols,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Proposed, Method::StandardQ, Method::Dwols];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::StandardQ => "standard_q",
            Method::Dwols => "dwols",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown method '{s}' (proposed, standard_q, dwols)")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Inference {
    /// Point estimates only.
    None,
    /// Plug-in sandwich covariance; only defined for the residualized estimator.
    Sandwich,
    NOfN,
    MOfN,
}

impl Inference {
    pub fn name(self) -> &'static str {
        match self {
            Inference::None => "none",
            Inference::Sandwich => "sandwich",
            Inference::NOfN => "nofn",
            Inference::MOfN => "mofn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Inference::None),
            "sandwich" => Ok(Inference::Sandwich),
            "nofn" | "n_of_n" => Ok(Inference::NOfN),
            "mofn" | "m_of_n" => Ok(Inference::MOfN),
            other => Err(Error::Config(format!("unknown inference '{other}' (none, sandwich, nofn, mofn)"))),
        }
    }

    /// Sandwich intervals exist only for the residualized estimator.
    pub fn check(self, method: Method) -> Result<()> {
        if self == Inference::Sandwich && method != Method::Proposed {
            return Err(Error::Config(format!("sandwich inference is only available for 'proposed', not '{method}'")));
        }
        Ok(())
    }
}

impl fmt::Display for Inference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Settings shared by every fit a method performs, including bootstrap refits.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub specs: NuisanceSpecs,
    pub k_folds: usize,
    pub clip_eps: f64,
    pub mode: PseudoMode,
    /// Stage-1 pseudo-outcome of standard Q-learning. dWOLS always credits
    /// the observed outcome.
    pub q_pseudo: LinearPseudo,
    pub ci_level: f64,
    pub n_boot: usize,
    pub kappa: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            specs: NuisanceSpecs::default(),
            k_folds: crossfit::DEFAULT_K_FOLDS,
            clip_eps: crossfit::DEFAULT_CLIP_EPS,
            mode: PseudoMode::Observed,
            q_pseudo: LinearPseudo::MaxQ,
            ci_level: 0.95,
            n_boot: 500,
            kappa: 0.05,
        }
    }
}

impl FitSettings {
    pub fn robust_q(&self, seed: u64) -> RobustQConfig {
        RobustQConfig {
            specs: self.specs.clone(),
            k_folds: self.k_folds,
            clip_eps: self.clip_eps,
            mode: self.mode,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.specs.validate()?;
        crossfit::check_clip(self.clip_eps)?;
        if self.k_folds < 2 {
            return Err(Error::Config("k_folds must be at least 2".into()));
        }
        BootstrapSpec::m_of_n(self.kappa, self.n_boot, 0).validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::Config(format!("ci_level {} must lie in (0, 1)", self.ci_level)));
        }
        Ok(())
    }
}

/// One method's fit on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodEstimate {
    /// Stage-2 coefficients followed by stage-1 coefficients.
    pub coef: Vec<f64>,
    /// Sandwich (proposed) or HC0 (comparators) standard errors in `coef` order.
    pub se: Vec<f64>,
    pub d2: usize,
    /// One entry per requested inference; `None` for [`Inference::None`].
    pub intervals: Vec<Option<Vec<(f64, f64)>>>,
    /// Non-regularity estimate behind m-of-n intervals, when one was requested.
    pub p_hat: Option<f64>,
    pub resample_size: Option<usize>,
}

impl MethodEstimate {
    pub fn regime(&self) -> Regime {
        Regime::new(self.coef[self.d2..].to_vec().into(), self.coef[..self.d2].to_vec().into())
    }
}

fn point_fit(data: &Dataset, design: &StageDesign, method: Method, settings: &FitSettings, seed: u64) -> Result<(Vec<f64>, Vec<f64>, nalgebra::DMatrix<f64>, nalgebra::DVector<f64>)> {
    let join = |a: &nalgebra::DVector<f64>, b: &nalgebra::DVector<f64>| a.iter().chain(b.iter()).copied().collect::<Vec<f64>>();
    match method {
        Method::Proposed => {
            let fit = fit_robust_q(data, design, &settings.robust_q(seed))?;
            Ok((join(&fit.stage2.beta, &fit.stage1.beta), join(&fit.stage2.se, &fit.stage1.se), fit.stage2.cov, fit.stage2.beta))
        }
        Method::StandardQ | Method::Dwols => {
            let fit: LinearQFit = if method == Method::StandardQ {
                fit_linear_q(data, design, Weighting::Unit, settings.q_pseudo)?
            } else {
                fit_dwols(data, design)?
            };
            Ok((fit.coefficients(), join(&fit.stage2.se, &fit.stage1.se), fit.stage2.cov, fit.stage2.beta))
        }
    }
}

/// Fit `method` and build the requested intervals. The point fit uses `seed`;
/// the bootstrap for inference slot `k` uses `derive(seed, [k + 1])`.
pub fn estimate(
    data: &Dataset,
    design: &StageDesign,
    method: Method,
    inferences: &[Inference],
    settings: &FitSettings,
    seed_: u64,
) -> Result<MethodEstimate> {
    for inf in inferences {
        inf.check(method)?;
    }
    let (coef, se, cov2, beta2) = point_fit(data, design, method, settings, seed_)?;
    let d2 = beta2.len();
    let mut p_hat = None;
    let mut resample_size = None;
    let mut intervals = Vec::with_capacity(inferences.len());
    for (k, &inf) in inferences.iter().enumerate() {
        let boot_seed = seed::derive(seed_, &[k as u64 + 1]);
        let refit = |d: &Dataset, s: u64| point_fit(d, design, method, settings, s).map(|r| r.0);
        intervals.push(match inf {
            Inference::None => None,
            Inference::Sandwich => Some(crate::estimator::wald_ci(&coef, &se, settings.ci_level)?),
            Inference::NOfN => {
                let spec = BootstrapSpec { ci_level: settings.ci_level, ..BootstrapSpec::n_of_n(settings.n_boot, boot_seed) };
                Some(bootstrap_ci(refit, data, &spec, 0.0)?.intervals)
            }
            Inference::MOfN => {
                let dm = build_design_matrices(data, design)?;
                let p = estimate_p_hat(&dm.s, &beta2, &cov2, settings.ci_level);
                let spec = BootstrapSpec {
                    ci_level: settings.ci_level,
                    ..BootstrapSpec::m_of_n(settings.kappa, settings.n_boot, boot_seed)
                };
                let res = bootstrap_ci(refit, data, &spec, p)?;
                p_hat = Some(p);
                resample_size = Some(res.resample_size);
                Some(res.intervals)
            }
        });
    }
    Ok(MethodEstimate { coef, se, d2, intervals, p_hat, resample_size })
}

/// `beta2_0, beta2_1, …, beta1_0, …`, zero-based with the intercept first.
pub fn parameter_names(design: &StageDesign) -> Vec<String> {
    (0..design.d2())
        .map(|j| format!("beta2_{j}"))
        .chain((0..design.d1()).map(|j| format!("beta1_{j}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{simulate_dataset, Outcome, Propensity, Scenario};

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()).unwrap(), m);
        }
        for i in [Inference::None, Inference::Sandwich, Inference::NOfN, Inference::MOfN] {
            assert_eq!(Inference::parse(i.name()).unwrap(), i);
        }
        assert!(Method::parse("bogus").is_err());
    }

    #[test]
    fn sandwich_rejected_for_comparators() {
        assert!(Inference::Sandwich.check(Method::Dwols).is_err());
        assert!(Inference::Sandwich.check(Method::Proposed).is_ok());
        assert!(Inference::MOfN.check(Method::StandardQ).is_ok());
    }

    #[test]
    fn estimate_layout() {
        let sc = Scenario::new(Propensity::Randomized, Outcome::LinearR, 300, 3);
        let (data, _) = simulate_dataset(&sc).unwrap();
        let settings = FitSettings { specs: NuisanceSpecs::preset("parametric").unwrap(), n_boot: 50, ..Default::default() };
        let est = estimate(&data, &sc.design(), Method::StandardQ, &[Inference::None, Inference::MOfN], &settings, 1).unwrap();
        assert_eq!(est.coef.len(), 7);
        assert!(est.intervals[0].is_none());
        let ci = est.intervals[1].as_ref().unwrap();
        assert_eq!(ci.len(), 7);
        assert!(ci.iter().all(|(lo, hi)| lo <= hi));
        // Responders have S = 0, so at least half the rows are non-regular.
        assert!(est.p_hat.unwrap() >= 0.4);
        assert!(est.resample_size.unwrap() < 300);
        let est = estimate(&data, &sc.design(), Method::Proposed, &[Inference::Sandwich], &settings, 1).unwrap();
        let ci = est.intervals[0].as_ref().unwrap();
        assert!(ci.iter().zip(&est.coef).all(|((lo, hi), b)| lo < b && b < hi));
    }
}
