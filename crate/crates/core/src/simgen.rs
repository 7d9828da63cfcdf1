//! Simulation scenarios with known blip structure, their true parameters and
//! Monte Carlo value oracles.
//!
//! Baseline covariates are `X₁ ~ U[−½, ½]⁵`. Regular outcomes draw
//! `X₂ₗ = X₁ₗ + Uₗ (l ≤ 3)`, `X₂₄ = 0.35X₁₅ + U₄`, `X₂₅ = U₅`, and only
//! non-responders (`R = 1`) receive a stage-2 treatment. Non-regular outcomes
//! replace the first two stage-2 covariates by Bernoulli draws and treat
//! everyone at stage 2; their blip is exactly zero on a set of positive
//! probability.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::crossfit::DEFAULT_CLIP_EPS;
use crate::data::{clip_probability, Dataset, NuisanceEstimates, StageDesign, Trajectory};
use crate::error::{Error, Result};
use crate::estimator::Regime;
use crate::learners::logistic::sigmoid;
use crate::linalg;
use crate::seed::{self, Rng};

pub const NOISE_SD: f64 = 0.5;
/// Monte Carlo size behind cached projected truths.
pub const TRUTH_MC: usize = 1_000_000;
const TRUTH_SEED: u64 = 0x5EED_7207;
const ALPHA: [f64; 5] = [1.0, 0.1, 0.1, 0.1, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Propensity {
    Randomized,
    Linear,
    Quadratic,
    InterQuad,
}

impl Propensity {
    pub const ALL: [Propensity; 4] = [Propensity::Randomized, Propensity::Linear, Propensity::Quadratic, Propensity::InterQuad];

    /// Linear predictor on a stage's five covariates.
    pub fn lambda(self, x: &[f64]) -> f64 {
        let quad = |x: &[f64]| {
            (x[0] - 0.5).powi(2)
                + (x[1] - 0.5).powi(2)
                + 0.6 * (x[2] - 0.5).powi(2)
                + 0.5 * (x[3] - 0.5).powi(2)
                + 0.5 * (x[4] - 0.5).powi(2)
                + x[0]
                + x[1]
                + 0.6 * x[2]
                + 0.5 * x[3]
                + 0.5 * x[4]
                - 2.0
        };
        match self {
            Propensity::Randomized => 0.0,
            Propensity::Linear => 2.0 * x[0] + 2.0 * x[1] + x[2] + 0.1 * x[3] + 0.1 * x[4],
            Propensity::Quadratic => 1.4 * quad(x),
            Propensity::InterQuad => 1.4 * (quad(x) + x[0] * x[1]),
        }
    }

    pub fn prob(self, x: &[f64]) -> f64 {
        sigmoid(self.lambda(x))
    }

    pub fn name(self) -> &'static str {
        match self {
            Propensity::Randomized => "randomized",
            Propensity::Linear => "linear",
            Propensity::Quadratic => "quadratic",
            Propensity::InterQuad => "interquad",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Propensity::Randomized => "Randomized",
            Propensity::Linear => "Linear",
            Propensity::Quadratic => "Quadratic",
            Propensity::InterQuad => "InterQuad",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Propensity::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown propensity model '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    /// Linear main effects, stage-2 blip `R(X₂₁ + X₂₂)`.
    LinearR,
    /// Nonlinear main effects `f(X₁) + f(X₂)`, stage-2 blip `R·g(X₂)`.
    FgsR,
    /// Linear main effects, stage-2 blip `2ϖ R X̃₂₁`.
    LinearNr,
    /// `f(X₁)` main effect, stage-2 blip `2ϖ R X̃₂₁`.
    NonlinearNr,
    /// Linear main effects, stage-2 blip `2ϖ R (A₁ + X̆₂₁)` with `X̆₂₁` depending on A₁.
    LinearNrInteract,
    /// Shifted `f(X₁)` main effect, stage-2 blip `2ϖ R (A₁ + X̆₂₁)`.
    NonlinearNrInteract,
}

impl Outcome {
    pub const ALL: [Outcome; 6] = [
        Outcome::LinearR,
        Outcome::FgsR,
        Outcome::LinearNr,
        Outcome::NonlinearNr,
        Outcome::LinearNrInteract,
        Outcome::NonlinearNrInteract,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Outcome::LinearR => "linear_r",
            Outcome::FgsR => "fgs_r",
            Outcome::LinearNr => "linear_nr",
            Outcome::NonlinearNr => "nonlinear_nr",
            Outcome::LinearNrInteract => "linear_nr_interact",
            Outcome::NonlinearNrInteract => "nonlinear_nr_interact",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Outcome::ALL
            .into_iter()
            .find(|o| o.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown outcome model '{s}'")))
    }

    pub fn is_regular(self) -> bool {
        matches!(self, Outcome::LinearR | Outcome::FgsR)
    }

    pub fn is_interaction(self) -> bool {
        matches!(self, Outcome::LinearNrInteract | Outcome::NonlinearNrInteract)
    }

    /// Blip regressors and conditioning sets fitted for this outcome family.
    pub fn design(self) -> StageDesign {
        if self.is_interaction() {
            StageDesign::simulation_interaction()
        } else {
            StageDesign::simulation_regular()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub propensity: Propensity,
    pub outcome: Outcome,
    /// Non-regularity switch in {0, 1}; ignored by regular outcomes.
    pub varpi: u8,
    pub n: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn new(propensity: Propensity, outcome: Outcome, n: usize, seed: u64) -> Self {
        Scenario { propensity, outcome, varpi: 0, n, seed }
    }

    pub fn with_varpi(mut self, varpi: u8) -> Self {
        self.varpi = varpi;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn design(&self) -> StageDesign {
        self.outcome.design()
    }

    fn effective_varpi(&self) -> u8 {
        if self.outcome.is_regular() {
            0
        } else {
            self.varpi
        }
    }

    /// `propensity/outcome[/varpi=V]`, without sample size or seed.
    pub fn id(&self) -> String {
        if self.outcome.is_regular() {
            format!("{}/{}", self.propensity.name(), self.outcome.name())
        } else {
            format!("{}/{}/varpi={}", self.propensity.name(), self.outcome.name(), self.varpi)
        }
    }

    /// Parse `propensity/outcome[/varpi=V][/n=N]`; missing parts default to
    /// ϖ = 0 and n = 2000, with seed 0.
    pub fn parse(id: &str) -> Result<Scenario> {
        let parts: Vec<&str> = id.trim().split('/').map(str::trim).collect();
        if parts.len() < 2 {
            return Err(Error::Config(format!("scenario '{id}' must look like propensity/outcome[/varpi=V][/n=N]")));
        }
        let mut sc = Scenario::new(Propensity::parse(parts[0])?, Outcome::parse(parts[1])?, 2000, 0);
        for part in &parts[2..] {
            let bad = || Error::Config(format!("scenario '{id}': cannot read '{part}'"));
            match part.split_once('=') {
                Some(("varpi", v)) => sc.varpi = v.parse().map_err(|_| bad())?,
                Some(("n", v)) => sc.n = v.parse().map_err(|_| bad())?,
                _ => return Err(bad()),
            }
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::InvalidInput(format!("scenario needs n >= 10, got {}", self.n)));
        }
        if self.varpi > 1 {
            return Err(Error::InvalidInput("varpi must be 0 or 1".into()));
        }
        Ok(())
    }
}

/// `f(x) = −1.5 + sin(πx₁x₂) + 2(x₃ − ½)² + x₄ + 1.5x₁/(|x₂| + |x₃|) + 2x₁(x₂ + x₃)`
pub fn f_fgs(x: &[f64]) -> f64 {
    -1.5 + f_shifted(x)
}

/// [`f_fgs`] without the −1.5 offset.
pub fn f_shifted(x: &[f64]) -> f64 {
    (std::f64::consts::PI * x[0] * x[1]).sin()
        + 2.0 * (x[2] - 0.5).powi(2)
        + x[3]
        + 1.5 * x[0] / (x[1].abs() + x[2].abs())
        + 2.0 * x[0] * (x[1] + x[2])
}

/// `g(x) = 2 sin(πx₁x₂) + 2(x₂ − ½)²`
pub fn g_fgs(x: &[f64]) -> f64 {
    2.0 * (std::f64::consts::PI * x[0] * x[1]).sin() + 2.0 * (x[1] - 0.5).powi(2)
}

/// Non-response indicator: `X₂₄` below its population median (0, or ½ for the
/// interaction families whose uniforms live on [0, 1]).
pub fn gen_response(outcome: Outcome, x24: f64) -> u8 {
    let median = if outcome.is_interaction() { 0.5 } else { 0.0 };
    u8::from(x24 < median)
}

/// Uniform and normal draws behind one subject; shared across counterfactual
/// actions so that regimes are compared on common random numbers.
#[derive(Debug, Clone)]
struct Draw {
    x1: [f64; 5],
    u: [f64; 5],
    bern: [f64; 2],
    a1: f64,
    a2: f64,
    eps: f64,
}

fn draw(rng: &mut Rng) -> Draw {
    let mut centered = || rng.random::<f64>() - 0.5;
    let x1 = [centered(), centered(), centered(), centered(), centered()];
    let u = [centered(), centered(), centered(), centered(), centered()];
    Draw {
        x1,
        u,
        bern: [rng.random(), rng.random()],
        a1: rng.random(),
        a2: rng.random(),
        eps: StandardNormal.sample(rng),
    }
}

fn stage2_covariates(outcome: Outcome, d: &Draw, a1: u8) -> [f64; 5] {
    let x1 = &d.x1;
    let u = &d.u;
    match outcome {
        Outcome::LinearR | Outcome::FgsR => [x1[0] + u[0], x1[1] + u[1], x1[2] + u[2], 0.35 * x1[4] + u[3], u[4]],
        Outcome::LinearNr | Outcome::NonlinearNr => {
            let t21 = f64::from(d.bern[0] < sigmoid(2.0 * x1[0] + 2.0 * x1[1] - 1.0));
            let t22 = f64::from(d.bern[1] < sigmoid(2.0 * x1[1] + t21 - 1.0));
            [t21, t22, u[0], 0.35 * x1[4] + u[1], u[2]]
        }
        Outcome::LinearNrInteract | Outcome::NonlinearNrInteract => {
            let b21 = f64::from(d.bern[0] < sigmoid(2.0 * x1[0] - 2.0 * f64::from(a1) - 1.0));
            [b21, u[0] + 0.5, u[1] + 0.5, 0.35 * x1[4] + u[2] + 0.5, u[3] + 0.5]
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome mean without the stage-2 treatment term.
fn eta2(outcome: Outcome, x1: &[f64], x2: &[f64]) -> f64 {
    match outcome {
        Outcome::LinearR | Outcome::LinearNr => dot(x1, &ALPHA) + dot(x2, &ALPHA),
        Outcome::FgsR => f_fgs(x1) + f_fgs(x2),
        Outcome::NonlinearNr => f_fgs(x1),
        Outcome::LinearNrInteract => dot(x1, &ALPHA) + dot(&x2[..4], &ALPHA[..4]),
        Outcome::NonlinearNrInteract => f_shifted(x1),
    }
}

/// True stage-2 blip `Δ₂`.
fn blip2(outcome: Outcome, varpi: u8, a1: u8, x2: &[f64], r: u8) -> f64 {
    let r = f64::from(r);
    let theta = 2.0 * f64::from(varpi);
    match outcome {
        Outcome::LinearR => r * (x2[0] + x2[1]),
        Outcome::FgsR => r * g_fgs(x2),
        Outcome::LinearNr | Outcome::NonlinearNr => theta * r * x2[0],
        Outcome::LinearNrInteract | Outcome::NonlinearNrInteract => theta * r * (f64::from(a1) + x2[0]),
    }
}

/// True stage-1 blip `Δ₁`: the gain in optimal stage-2 value from A₁ = 1.
/// Zero unless A₁ shifts X̆₂₁ or enters the stage-2 blip.
fn blip1(outcome: Outcome, varpi: u8, x1: &[f64]) -> f64 {
    if !outcome.is_interaction() {
        return 0.0;
    }
    let p1 = sigmoid(2.0 * x1[0] - 3.0);
    let p0 = sigmoid(2.0 * x1[0] - 1.0);
    // P(R = 1 | X₁₅) with X₂₄ = 0.35X₁₅ + U, U ~ U[0, 1].
    let q = 0.5 - 0.35 * x1[4];
    let direct = if outcome == Outcome::LinearNrInteract { p1 - p0 } else { 0.0 };
    direct + 2.0 * f64::from(varpi) * q * (1.0 + p1 - p0)
}

fn eligible(outcome: Outcome, r: u8) -> bool {
    !outcome.is_regular() || r == 1
}

/// One generated subject together with its true conditional quantities.
struct Subject {
    x1: Vec<f64>,
    a1: u8,
    x2: Vec<f64>,
    r: u8,
    a2: Option<u8>,
    y: f64,
}

fn generate(scenario: &Scenario, rng: &mut Rng) -> Subject {
    let varpi = scenario.effective_varpi();
    loop {
        let d = draw(rng);
        let a1 = u8::from(d.a1 < scenario.propensity.prob(&d.x1));
        let x2 = stage2_covariates(scenario.outcome, &d, a1);
        let r = gen_response(scenario.outcome, x2[3]);
        let a2 = eligible(scenario.outcome, r).then(|| u8::from(d.a2 < scenario.propensity.prob(&x2)));
        let mean = eta2(scenario.outcome, &d.x1, &x2)
            + a2.map_or(0.0, |a| f64::from(a) * blip2(scenario.outcome, varpi, a1, &x2, r));
        let y = mean + NOISE_SD * d.eps;
        // f has a pole where |x₂| + |x₃| = 0; redraw on that null set.
        if y.is_finite() {
            return Subject { x1: d.x1.to_vec(), a1, x2: x2.to_vec(), r, a2, y };
        }
    }
}

/// Generate `scenario.n` subjects from the stream seeded by `scenario.seed`.
pub fn simulate_dataset(scenario: &Scenario) -> Result<(Dataset, SimTruth)> {
    scenario.validate()?;
    let mut rng = seed::rng(scenario.seed);
    let rows: Vec<Trajectory> = (0..scenario.n)
        .map(|_| {
            let s = generate(scenario, &mut rng);
            Trajectory { x1: s.x1, a1: s.a1, x2: s.x2, a2: s.a2, y: s.y, r: Some(s.r) }
        })
        .collect();
    Ok((Dataset::from_rows(&rows)?, sim_truth(scenario)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub beta2_star: DVector<f64>,
    pub beta1_star: DVector<f64>,
    /// β*₂ came from a Monte Carlo projection rather than a closed form.
    pub beta2_projected: bool,
    /// Monte Carlo value of the optimal regime.
    pub optimal_value: f64,
}

type TruthKey = (Propensity, Outcome, u8);

fn truth_cache() -> &'static Mutex<HashMap<TruthKey, SimTruth>> {
    static CACHE: OnceLock<Mutex<HashMap<TruthKey, SimTruth>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// True blip parameters for a scenario family (sample size and seed are
/// irrelevant). Closed forms where the blip is linear in S, otherwise a
/// 10⁶-draw projection; cached per family.
pub fn sim_truth(scenario: &Scenario) -> SimTruth {
    let varpi = scenario.effective_varpi();
    let key = (scenario.propensity, scenario.outcome, varpi);
    if let Some(t) = truth_cache().lock().expect("truth cache").get(&key) {
        return t.clone();
    }
    let w = 2.0 * f64::from(varpi);
    let (beta2_star, beta2_projected) = match scenario.outcome {
        Outcome::LinearR => (DVector::from_vec(vec![0.0, 1.0, 1.0, 0.0]), false),
        Outcome::LinearNr | Outcome::NonlinearNr => (DVector::from_vec(vec![0.0, w, 0.0, 0.0]), false),
        Outcome::LinearNrInteract | Outcome::NonlinearNrInteract => {
            (DVector::from_vec(vec![0.0, w, w, 0.0]), false)
        }
        Outcome::FgsR => (project_true_beta2(scenario, TRUTH_MC, TRUTH_SEED).beta, true),
    };
    let beta1_star = if scenario.outcome.is_interaction() {
        project_true_beta1(scenario, TRUTH_MC, TRUTH_SEED).beta
    } else {
        DVector::zeros(3)
    };
    let optimal_value = optimal_value(scenario, TRUTH_MC / 5, TRUTH_SEED);
    let truth = SimTruth { beta2_star, beta1_star, beta2_projected, optimal_value };
    truth_cache().lock().expect("truth cache").insert(key, truth.clone());
    truth
}

/// Monte Carlo weighted projection with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub beta: DVector<f64>,
    pub se: DVector<f64>,
}

fn weighted_projection(x: &DMatrix<f64>, target: &[f64], weights: &[f64]) -> Projection {
    let beta = linalg::weighted_least_squares(x, target, Some(weights)).expect("projection design is nonsingular");
    let (gram, _) = linalg::weighted_normal_equations(x, target, Some(weights));
    let fitted = x * &beta;
    let mut scores = x.clone();
    for i in 0..x.nrows() {
        scores.row_mut(i).scale_mut(weights[i] * (target[i] - fitted[i]));
    }
    let ginv = linalg::inverse_spd(&gram).expect("projection design is nonsingular");
    let cov = &ginv * linalg::outer_sum(&scores) * &ginv;
    let se = DVector::from_iterator(cov.nrows(), (0..cov.nrows()).map(|j| cov[(j, j)].max(0.0).sqrt()));
    Projection { beta, se }
}

/// Best linear predictor of `Δ₂` in the span of S under weights `var(A₂ | S⁰)`,
/// the population target of the residualized stage-2 regression.
pub fn project_true_beta2(scenario: &Scenario, n_mc: usize, seed_: u64) -> Projection {
    let design = scenario.design();
    let varpi = scenario.effective_varpi();
    let mut rng = seed::rng(seed_);
    let mut rows = Vec::new();
    let mut target = Vec::new();
    let mut weights = Vec::new();
    for _ in 0..n_mc {
        let d = draw(&mut rng);
        let a1 = u8::from(d.a1 < scenario.propensity.prob(&d.x1));
        let x2 = stage2_covariates(scenario.outcome, &d, a1);
        let r = gen_response(scenario.outcome, x2[3]);
        let scale = if design.scale_by_r { f64::from(r) } else { 1.0 };
        if !eligible(scenario.outcome, r) || scale == 0.0 {
            continue;
        }
        let delta = blip2(scenario.outcome, varpi, a1, &x2, r);
        if !delta.is_finite() {
            continue;
        }
        let p = scenario.propensity.prob(&x2);
        rows.extend(design.stage2.iter().map(|f| scale * f.eval(&d.x1, a1, &x2)));
        target.push(delta);
        weights.push(p * (1.0 - p));
    }
    let x = DMatrix::from_row_slice(target.len(), design.d2(), &rows);
    weighted_projection(&x, &target, &weights)
}

/// Best linear predictor of `Δ₁` in the span of W under weights `var(A₁ | W⁰)`.
pub fn project_true_beta1(scenario: &Scenario, n_mc: usize, seed_: u64) -> Projection {
    let design = scenario.design();
    let varpi = scenario.effective_varpi();
    let mut rng = seed::rng(seed_);
    let mut rows = Vec::with_capacity(n_mc * design.d1());
    let mut target = Vec::with_capacity(n_mc);
    let mut weights = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let d = draw(&mut rng);
        let p = scenario.propensity.prob(&d.x1);
        rows.extend(design.stage1.iter().map(|f| f.eval(&d.x1, 0, &[])));
        target.push(blip1(scenario.outcome, varpi, &d.x1));
        weights.push(p * (1.0 - p));
    }
    let x = DMatrix::from_row_slice(n_mc, design.d1(), &rows);
    weighted_projection(&x, &target, &weights)
}

/// Monte Carlo value of a regime next to the optimal regime, on common random
/// numbers. Values are conditional means given the realized covariates, so the
/// outcome noise does not enter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueEstimate {
    pub value: f64,
    pub optimal_value: f64,
    pub regret: f64,
    pub regret_se: f64,
}

fn counterfactual_value(scenario: &Scenario, d: &Draw, choose: &mut dyn FnMut(&[f64], Option<(u8, &[f64], u8)>) -> u8) -> f64 {
    let varpi = scenario.effective_varpi();
    let a1 = choose(&d.x1, None);
    let x2 = stage2_covariates(scenario.outcome, d, a1);
    let r = gen_response(scenario.outcome, x2[3]);
    let mut v = eta2(scenario.outcome, &d.x1, &x2);
    if eligible(scenario.outcome, r) {
        let a2 = choose(&d.x1, Some((a1, &x2, r)));
        v += f64::from(a2) * blip2(scenario.outcome, varpi, a1, &x2, r);
    }
    v
}

fn optimal_choice(scenario: &Scenario) -> impl FnMut(&[f64], Option<(u8, &[f64], u8)>) -> u8 + '_ {
    let varpi = scenario.effective_varpi();
    move |x1, stage2| match stage2 {
        None => u8::from(blip1(scenario.outcome, varpi, x1) > 0.0),
        Some((a1, x2, r)) => u8::from(blip2(scenario.outcome, varpi, a1, x2, r) > 0.0),
    }
}

fn optimal_value(scenario: &Scenario, n_mc: usize, seed_: u64) -> f64 {
    let mut rng = seed::rng(seed_);
    let mut choose = optimal_choice(scenario);
    let mut total = 0.0;
    let mut count = 0usize;
    while count < n_mc {
        let v = counterfactual_value(scenario, &draw(&mut rng), &mut choose);
        if v.is_finite() {
            total += v;
            count += 1;
        }
    }
    total / n_mc as f64
}

pub fn regime_value(scenario: &Scenario, regime: &Regime, n_mc: usize, seed_: u64) -> Result<ValueEstimate> {
    let design = scenario.design();
    if regime.beta1.len() != design.d1() || regime.beta2.len() != design.d2() {
        return Err(Error::InvalidInput("regime dimensions do not match the scenario design".into()));
    }
    if n_mc < 2 {
        return Err(Error::InvalidInput("regime value needs at least 2 draws".into()));
    }
    let mut rng = seed::rng(seed_);
    let mut opt = optimal_choice(scenario);
    let mut rule = |x1: &[f64], stage2: Option<(u8, &[f64], u8)>| -> u8 {
        match stage2 {
            None => {
                let w: Vec<f64> = design.stage1.iter().map(|f| f.eval(x1, 0, &[])).collect();
                u8::from(dot(regime.beta1.as_slice(), &w) > 0.0)
            }
            Some((a1, x2, r)) => {
                let scale = if design.scale_by_r { f64::from(r) } else { 1.0 };
                let s: Vec<f64> = design.stage2.iter().map(|f| scale * f.eval(x1, a1, x2)).collect();
                u8::from(dot(regime.beta2.as_slice(), &s) > 0.0)
            }
        }
    };
    let (mut sv, mut so, mut sg, mut sg2) = (0.0, 0.0, 0.0, 0.0);
    let mut count = 0usize;
    while count < n_mc {
        let d = draw(&mut rng);
        let vo = counterfactual_value(scenario, &d, &mut opt);
        let v = counterfactual_value(scenario, &d, &mut rule);
        if !(v.is_finite() && vo.is_finite()) {
            continue;
        }
        sv += v;
        so += vo;
        sg += vo - v;
        sg2 += (vo - v).powi(2);
        count += 1;
    }
    let m = n_mc as f64;
    let regret = sg / m;
    let var = (sg2 / m - regret * regret).max(0.0) * m / (m - 1.0);
    Ok(ValueEstimate { value: sv / m, optimal_value: so / m, regret, regret_se: (var / m).sqrt() })
}

/// True nuisance functions evaluated on `data`. `μ₁Y` is the conditional mean
/// of the β*₂ pseudo-outcome given X₁, integrated over the stage-2 history with
/// `inner` draws per row. Propensities are clipped at the default ε.
pub fn true_nuisances(scenario: &Scenario, data: &Dataset, inner: usize, seed_: u64) -> Result<NuisanceEstimates> {
    if data.p1() != 5 || data.p2() != 5 {
        return Err(Error::InvalidInput("true nuisances need five covariates per stage".into()));
    }
    let truth = sim_truth(scenario);
    let design = scenario.design();
    let varpi = scenario.effective_varpi();
    let n = data.n();
    let outcome = scenario.outcome;
    let pseudo_mean = |x1: &[f64], a1: u8, x2: &[f64], r: u8| -> f64 {
        let base = eta2(outcome, x1, x2);
        if !eligible(outcome, r) {
            return base;
        }
        let p2 = clip_probability(scenario.propensity.prob(x2), DEFAULT_CLIP_EPS);
        let scale = if design.scale_by_r { f64::from(r) } else { 1.0 };
        let s: Vec<f64> = design.stage2.iter().map(|f| scale * f.eval(x1, a1, x2)).collect();
        let fitted = dot(truth.beta2_star.as_slice(), &s);
        let ind = if fitted > 0.0 { 1.0 } else { 0.0 };
        base + p2 * blip2(outcome, varpi, a1, x2, r) + fitted * (ind - p2)
    };
    let mut est = NuisanceEstimates {
        mu1a: vec![0.0; n],
        mu2a: vec![0.0; n],
        mu1y: vec![0.0; n],
        mu2y: vec![0.0; n],
        fold_of: vec![0; n],
        clip_eps: DEFAULT_CLIP_EPS,
    };
    for i in 0..n {
        let row = data.row(i);
        let r = row.r.ok_or_else(|| Error::InvalidInput(format!("row {i}: response indicator missing")))?;
        let p1 = clip_probability(scenario.propensity.prob(&row.x1), DEFAULT_CLIP_EPS);
        let p2 = clip_probability(scenario.propensity.prob(&row.x2), DEFAULT_CLIP_EPS);
        est.mu1a[i] = p1;
        est.mu2a[i] = p2;
        let base = eta2(outcome, &row.x1, &row.x2);
        est.mu2y[i] = if row.a2.is_some() { base + p2 * blip2(outcome, varpi, row.a1, &row.x2, r) } else { base };
        let mut rng = seed::rng_at(seed_, &[i as u64]);
        let mut acc = 0.0;
        let mut count = 0usize;
        while count < inner {
            let mut d = draw(&mut rng);
            d.x1.copy_from_slice(&row.x1);
            let a1 = u8::from(d.a1 < p1);
            let x2 = stage2_covariates(outcome, &d, a1);
            let rr = gen_response(outcome, x2[3]);
            let v = pseudo_mean(&row.x1, a1, &x2, rr);
            if v.is_finite() {
                acc += v;
                count += 1;
            }
        }
        est.mu1y[i] = acc / inner.max(1) as f64;
    }
    Ok(est)
}
