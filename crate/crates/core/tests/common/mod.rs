//! Helpers shared by the invariant tests and the acceptance binary: a
//! brute-force normal-equations oracle and one checker per invariant. Each
//! checker returns `Err(description)` on the first violation.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use robust_qlearn::crossfit::{crossfit_one, make_folds, Nuisance, NuisanceSpecs, DEFAULT_CLIP_EPS};
use robust_qlearn::estimator::{fit_with_nuisances, PseudoMode, Regime};
use robust_qlearn::harness::config::ExperimentConfig;
use robust_qlearn::harness::run_experiment;
use robust_qlearn::learners::stack::simplex_least_squares;
use robust_qlearn::learners::{LearnerSpec, Model, Task};
use robust_qlearn::seed;
use robust_qlearn::simgen::{simulate_dataset, Outcome, Propensity, Scenario};
use robust_qlearn::{build_design_matrices, fit_robust_q, Dataset, Feature, NuisanceEstimates, RobustQConfig, StageDesign, Trajectory};

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Small random instance with known nuisance functions: S = (1, X₂₁, A₁),
/// W = (1, X₁₁), about one in seven A₂ missing.
pub fn random_instance(seed_: u64, n: usize) -> (Dataset, StageDesign, NuisanceEstimates) {
    let mut rng = seed::rng(seed_);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut rows = Vec::with_capacity(n);
    let mut nuis = NuisanceEstimates { mu1a: vec![], mu2a: vec![], mu1y: vec![], mu2y: vec![], fold_of: vec![0; n], clip_eps: DEFAULT_CLIP_EPS };
    for i in 0..n {
        let x1: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x2: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m1a = logistic(0.3 * x1[0]);
        let a1 = u8::from(rng.random::<f64>() < m1a);
        let m2a = logistic(0.5 * x2[0] - 0.2 * f64::from(a1));
        // Rows 0 and 1 always carry A₂ of both classes so stage 2 is identified.
        let a2 = match i {
            0 => Some(0),
            1 => Some(1),
            _ if rng.random::<f64>() < 1.0 / 7.0 => None,
            _ => Some(u8::from(rng.random::<f64>() < m2a)),
        };
        let m2y = x2[0] + 0.5 * x1[0] + 0.3 * f64::from(a1);
        let blip = 0.5 + x2[0] - 0.4 * f64::from(a1);
        let y = m2y + a2.map_or(0.0, |a| (f64::from(a) - m2a) * blip) + noise.sample(&mut rng);
        nuis.mu1a.push(m1a);
        nuis.mu2a.push(m2a);
        nuis.mu1y.push(x1[0] - 0.2 * x1[1]);
        nuis.mu2y.push(m2y);
        rows.push(Trajectory { x1, a1, x2, a2, y, r: None });
    }
    let design = StageDesign::new(
        vec![Feature::Intercept, Feature::X2(0), Feature::A1],
        false,
        vec![Feature::Intercept, Feature::X1(0)],
        2,
        2,
    );
    (Dataset::from_rows(&rows).unwrap(), design, nuis)
}

/// Gaussian elimination with partial pivoting on a dense copy of `a`.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let d = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(row, &r)| row.iter().copied().chain([r]).collect()).collect();
    for col in 0..d {
        let pivot = (col..d).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        for row in col + 1..d {
            let f = m[row][col] / m[col][col];
            for k in col..=d {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; d];
    for row in (0..d).rev() {
        let tail: f64 = (row + 1..d).map(|k| m[row][k] * x[k]).sum();
        x[row] = (m[row][d] - tail) / m[row][row];
    }
    Some(x)
}

/// Solve `Σ zᵢzᵢᵀ β = Σ zᵢ rᵢ` with explicit loops.
fn normal_equations(z: &[Vec<f64>], r: &[f64]) -> Option<Vec<f64>> {
    let d = z[0].len();
    let mut gram = vec![vec![0.0; d]; d];
    let mut rhs = vec![0.0; d];
    for (zi, &ri) in z.iter().zip(r) {
        for a in 0..d {
            rhs[a] += zi[a] * ri;
            for b in 0..d {
                gram[a][b] += zi[a] * zi[b];
            }
        }
    }
    gauss_solve(&gram, &rhs)
}

/// Both stage coefficient vectors computed from the raw rows, without the
/// library's design-matrix or linear-algebra code.
pub fn oracle_fit(data: &Dataset, design: &StageDesign, nuis: &NuisanceEstimates, mode: PseudoMode) -> Option<(Vec<f64>, Vec<f64>)> {
    let rows = data.rows();
    let s_of = |t: &Trajectory| -> Vec<f64> { design.stage2.iter().map(|f| f.eval(&t.x1, t.a1, &t.x2)).collect() };
    let w_of = |t: &Trajectory| -> Vec<f64> { design.stage1.iter().map(|f| f.eval(&t.x1, t.a1, &t.x2)).collect() };
    let mut z2 = Vec::new();
    let mut r2 = Vec::new();
    for (i, t) in rows.iter().enumerate() {
        if let Some(a2) = t.a2 {
            z2.push(s_of(t).iter().map(|v| v * (f64::from(a2) - nuis.mu2a[i])).collect::<Vec<_>>());
            r2.push(t.y - nuis.mu2y[i]);
        }
    }
    let beta2 = normal_equations(&z2, &r2)?;
    let mut z1 = Vec::new();
    let mut r1 = Vec::new();
    for (i, t) in rows.iter().enumerate() {
        let pseudo = match t.a2 {
            None => t.y,
            Some(a2) => {
                let s: f64 = s_of(t).iter().zip(&beta2).map(|(a, b)| a * b).sum();
                let best = if s > 0.0 { 1.0 } else { 0.0 };
                match mode {
                    PseudoMode::Observed => t.y + s * (best - f64::from(a2)),
                    PseudoMode::Model => nuis.mu2y[i] + s * (best - nuis.mu2a[i]),
                }
            }
        };
        z1.push(w_of(t).iter().map(|v| v * (f64::from(t.a1) - nuis.mu1a[i])).collect::<Vec<_>>());
        r1.push(pseudo - nuis.mu1y[i]);
    }
    let beta1 = normal_equations(&z1, &r1)?;
    Some((beta2, beta1))
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0))
}

/// Library fit with injected nuisances against [`oracle_fit`].
pub fn check_oracle(seed_: u64, n: usize, mode: PseudoMode, tol: f64) -> Result<f64, String> {
    let (data, design, nuis) = random_instance(seed_, n);
    let (o2, o1) = oracle_fit(&data, &design, &nuis, mode).ok_or("oracle system singular")?;
    let fit = fit_with_nuisances(&data, &design, &nuis, mode).map_err(|e| format!("library fit failed: {e}"))?;
    let (l2, l1) = (fit.stage2.beta.as_slice(), fit.stage1.beta.as_slice());
    let gap = o2.iter().zip(l2).chain(o1.iter().zip(l1)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if close(&o2, l2, tol) && close(&o1, l1, tol) {
        Ok(gap)
    } else {
        Err(format!("seed {seed_}, n {n}: oracle {o2:?}/{o1:?} vs library {l2:?}/{l1:?}"))
    }
}

/// Moving one row's outcome never changes predictions inside its own fold.
pub fn check_fold_isolation(seed_: u64, spec: &str) -> Result<(), String> {
    let sc = Scenario::new(Propensity::Linear, Outcome::LinearR, 120, seed_);
    let (data, _) = simulate_dataset(&sc).map_err(|e| e.to_string())?;
    let dm = build_design_matrices(&data, &sc.design()).map_err(|e| e.to_string())?;
    let spec = LearnerSpec::parse(spec, Task::Regression).map_err(|e| e.to_string())?;
    let plan = make_folds(data.n(), 3, seed_).map_err(|e| e.to_string())?;
    let base = crossfit_one(Nuisance::Mu1Y, &data, &dm, &spec, &plan, DEFAULT_CLIP_EPS, seed_, None).map_err(|e| e.to_string())?;
    let row = (seed_ as usize) % data.n();
    let mut y = data.y().to_vec();
    y[row] += 100.0;
    let moved = crossfit_one(Nuisance::Mu1Y, &data, &dm, &spec, &plan, DEFAULT_CLIP_EPS, seed_, Some(&y)).map_err(|e| e.to_string())?;
    let fold = plan.assignment[row];
    for i in plan.members(fold) {
        if base[i].to_bits() != moved[i].to_bits() {
            return Err(format!("row {i} in fold {fold} changed when row {row} moved"));
        }
    }
    if plan.members(fold).len() == data.n() || base == moved {
        return Err("perturbation had no effect outside its fold".into());
    }
    Ok(())
}

/// Super-learner weights and the stacking solver stay on the simplex.
pub fn check_simplex(seed_: u64) -> Result<(), String> {
    let mut rng = seed::rng(seed_);
    let n = 80;
    let x = DMatrix::<f64>::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
    let y: Vec<f64> = (0..n).map(|i| (3.0 * x[(i, 0)]).sin() + x[(i, 1)] * x[(i, 2)] + rng.random_range(-0.3..0.3)).collect();
    let spec = LearnerSpec::parse("sl(v=3, mean, glm, spline(4), kernel, rf(trees=15))", Task::Regression).map_err(|e| e.to_string())?;
    let fitted = spec.fit(&x, &y, Task::Regression, seed_).map_err(|e| e.to_string())?;
    let Model::Stack(stack) = &fitted.model else { return Err("super learner did not produce a stack".into()) };
    let on_simplex = |w: &[f64]| w.iter().all(|&v| v >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() < 1e-9;
    if !on_simplex(&stack.weights) {
        return Err(format!("stack weights {:?} leave the simplex", stack.weights));
    }
    let z = DMatrix::from_fn(n, 4, |_, _| rng.random_range(-2.0..2.0));
    let w = simplex_least_squares(&z, &y);
    if !on_simplex(&w) {
        return Err(format!("solver weights {w:?} leave the simplex"));
    }
    Ok(())
}

/// Positive rescaling keeps every decision; negation flips every decision
/// whose score is nonzero.
pub fn check_decisions(seed_: u64) -> Result<(), String> {
    let mut rng = seed::rng(seed_);
    let b1 = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
    let b2 = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
    let c = rng.random_range(0.01..100.0);
    let base = Regime::new(b1.clone(), b2.clone());
    let scaled = Regime::new(&b1 * c, &b2 * c);
    let flipped = Regime::new(-&b1, -&b2);
    for _ in 0..50 {
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d = base.decide(&w, &s).map_err(|e| e.to_string())?;
        if scaled.decide(&w, &s).map_err(|e| e.to_string())? != d {
            return Err(format!("scaling by {c} changed a decision"));
        }
        let f = flipped.decide(&w, &s).map_err(|e| e.to_string())?;
        if f.0 == d.0 || f.1 == d.1 {
            return Err("negating β did not flip a decision".into());
        }
    }
    Ok(())
}

/// Ỹ − Y = max(Sᵀβ̂₂, 0) − A₂·Sᵀβ̂₂ on rows with observed A₂, Ỹ = Y elsewhere.
pub fn check_pseudo_identity(seed_: u64, n: usize) -> Result<(), String> {
    let (data, design, nuis) = random_instance(seed_, n);
    let fit = fit_with_nuisances(&data, &design, &nuis, PseudoMode::Observed).map_err(|e| e.to_string())?;
    let dm = build_design_matrices(&data, &design).map_err(|e| e.to_string())?;
    let score = &dm.s * &fit.stage2.beta;
    for i in 0..data.n() {
        let y = data.y()[i];
        let expected = match data.a2()[i] {
            None => 0.0,
            Some(a) => score[i].max(0.0) - f64::from(a) * score[i],
        };
        let got = fit.pseudo_outcome[i] - y;
        if (got - expected).abs() > 1e-12 * (1.0 + y.abs()) || got < -1e-12 {
            return Err(format!("row {i}: Ỹ − Y = {got}, expected {expected}"));
        }
    }
    Ok(())
}

/// Adding h(S⁰) to Y and to μ̂₂Y leaves β̂₂ unchanged; when h depends on W⁰
/// only and is also added to μ̂₁Y, β̂₁ is unchanged too.
pub fn check_eta_shift(seed_: u64, n: usize, mode: PseudoMode) -> Result<(), String> {
    let (data, design, nuis) = random_instance(seed_, n);
    let base = fit_with_nuisances(&data, &design, &nuis, mode).map_err(|e| e.to_string())?;
    let rows = data.rows();
    let shift = |hs: &dyn Fn(&Trajectory) -> f64, stage1: bool| -> Result<(Vec<f64>, Vec<f64>), String> {
        let h: Vec<f64> = rows.iter().map(hs).collect();
        let y: Vec<f64> = data.y().iter().zip(&h).map(|(a, b)| a + b).collect();
        let mut nu = nuis.clone();
        nu.mu2y.iter_mut().zip(&h).for_each(|(m, b)| *m += b);
        if stage1 {
            nu.mu1y.iter_mut().zip(&h).for_each(|(m, b)| *m += b);
        }
        let d = data.with_outcome(y).map_err(|e| e.to_string())?;
        let fit = fit_with_nuisances(&d, &design, &nu, mode).map_err(|e| e.to_string())?;
        Ok((fit.stage2.beta.as_slice().to_vec(), fit.stage1.beta.as_slice().to_vec()))
    };
    let (b2, _) = shift(&|t| 5.0 * (t.x2[1] * 3.0).sin() + 2.0 * f64::from(t.a1) + t.x1[1].powi(3), false)?;
    if !close(&b2, base.stage2.beta.as_slice(), 1e-9) {
        return Err(format!("stage 2 moved under an η₂ shift: {b2:?} vs {:?}", base.stage2.beta.as_slice()));
    }
    let (b2, b1) = shift(&|t| 4.0 * t.x1[0].exp() - 3.0 * t.x1[1], true)?;
    if !close(&b2, base.stage2.beta.as_slice(), 1e-9) || !close(&b1, base.stage1.beta.as_slice(), 1e-9) {
        return Err(format!("estimates moved under a W⁰ shift: {b1:?} vs {:?}", base.stage1.beta.as_slice()));
    }
    Ok(())
}

/// Same seed, same estimates; and the experiment runner is invariant to the
/// number of worker threads.
pub fn check_determinism(seed_: u64, workers: (usize, usize)) -> Result<(), String> {
    let sc = Scenario::new(Propensity::InterQuad, Outcome::FgsR, 300, seed_);
    let (data, _) = simulate_dataset(&sc).map_err(|e| e.to_string())?;
    let cfg = RobustQConfig::with_specs(NuisanceSpecs::preset("fast").map_err(|e| e.to_string())?).seed(seed_);
    let a = fit_robust_q(&data, &sc.design(), &cfg).map_err(|e| e.to_string())?;
    let b = fit_robust_q(&data, &sc.design(), &cfg).map_err(|e| e.to_string())?;
    if a.stage2.beta != b.stage2.beta || a.stage1.beta != b.stage1.beta || a.stage1.cov != b.stage1.cov {
        return Err("repeated fit with the same seed differs".into());
    }
    let text = format!(
        "[experiment]\nreplications = 4\nseed = {seed_}\n[scenarios]\npropensity = linear\noutcome = linear_r, linear_nr\nn = 250\n\
         [methods]\nproposed = sandwich\ndwols = mofn\n[learners]\npreset = fast\n[bootstrap]\nn_boot = 50\n[value]\nn_mc = 2000\n"
    );
    let mut cfg = ExperimentConfig::from_ini_str(&text).map_err(|e| e.to_string())?;
    let mut run = |w: usize| -> Result<Vec<_>, String> {
        cfg.workers = Some(w);
        let mut rows = run_experiment(&cfg).map_err(|e| e.to_string())?;
        rows.iter_mut().for_each(|r| r.wall_time = 0.0);
        Ok(rows)
    };
    if run(workers.0)? != run(workers.1)? {
        return Err(format!("results differ between {} and {} workers", workers.0, workers.1));
    }
    Ok(())
}
