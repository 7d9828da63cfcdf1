//! Robust Q-learning for two-stage binary dynamic treatment regimes.
//!
//! The estimator residualizes both the outcome and the treatment on
//! cross-fitted nuisance predictions before solving each stage's least-squares
//! problem, so blip coefficients stay consistent when the outcome models are
//! flexible or misspecified. Around it sit comparator estimators, simulation
//! generators with known truths, and an experiment harness.

pub mod baselines;
pub mod crossfit;
pub mod data;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod learners;
pub mod linalg;
pub mod seed;
pub mod simgen;

pub use data::{build_design_matrices, Dataset, DesignMatrices, Feature, NuisanceEstimates, StageDesign, StageFit, Trajectory};
pub use error::{Error, Result};
pub use estimator::{fit_robust_q, PseudoMode, Regime, RobustQConfig, RobustQResult};
