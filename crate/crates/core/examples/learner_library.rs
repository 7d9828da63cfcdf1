//! Score candidate nuisance learners against the true stage-2 propensity and
//! outcome mean of a simulation scenario, on an independent test sample.
//!
//! Usage: `cargo run --release --example learner_library -- [PROPENSITY] [OUTCOME] [LEARNER]...`
//! where each LEARNER is an expression such as `glm`, `spline(6)`,
//! `rf(min_leaf=1)` or a preset name.

use robust_qlearn::learners::{LearnerSpec, Task};
use robust_qlearn::simgen::{simulate_dataset, true_nuisances, Outcome, Propensity, Scenario};
use robust_qlearn::{build_design_matrices, Dataset};
use nalgebra::DMatrix;

fn observed_rows(data: &Dataset) -> Vec<usize> {
    (0..data.n()).filter(|&i| data.a2()[i].is_some()).collect()
}

fn rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let propensity = Propensity::parse(args.first().map_or("interquad", String::as_str))?;
    let outcome = Outcome::parse(args.get(1).map_or("fgs_r", String::as_str))?;
    let mut learners: Vec<String> = args.iter().skip(2).cloned().collect();
    if learners.is_empty() {
        learners = ["glm", "spline", "kernel", "rf", "fast", "default"].map(String::from).to_vec();
    }

    let train_sc = Scenario::new(propensity, outcome, 1000, 1);
    let test_sc = Scenario::new(propensity, outcome, 5000, 2);
    let design = train_sc.design();
    let (train, _) = simulate_dataset(&train_sc)?;
    let (test, _) = simulate_dataset(&test_sc)?;
    let truth = true_nuisances(&test_sc, &test, 1, 0)?;

    let (tr_idx, te_idx) = (observed_rows(&train), observed_rows(&test));
    let x_tr = rows(&build_design_matrices(&train, &design)?.s0, &tr_idx);
    let x_te = rows(&build_design_matrices(&test, &design)?.s0, &te_idx);
    let a_tr: Vec<f64> = tr_idx.iter().map(|&i| f64::from(train.a2()[i].unwrap_or(0))).collect();
    let y_tr: Vec<f64> = tr_idx.iter().map(|&i| train.y()[i]).collect();
    let mu2a: Vec<f64> = te_idx.iter().map(|&i| truth.mu2a[i]).collect();
    let mu2y: Vec<f64> = te_idx.iter().map(|&i| truth.mu2y[i]).collect();

    println!("{}: {} training rows with observed A2", train_sc.id(), tr_idx.len());
    println!("{:>28} {:>12} {:>12}", "learner", "MSE(mu2A)", "MSE(mu2Y)");
    for expr in &learners {
        let score = |task: Task, target: &[f64], truth: &[f64]| -> String {
            let pred = LearnerSpec::parse(expr, task)
                .and_then(|spec| spec.fit(&x_tr, target, task, 7))
                .and_then(|model| model.predict(&x_te));
            match pred {
                Ok(p) => format!("{:.5}", mse(&p, truth)),
                Err(_) => "n/a".into(),
            }
        };
        let a = score(Task::Probability, &a_tr, &mu2a);
        let y = score(Task::Regression, &y_tr, &mu2y);
        println!("{expr:>28} {a:>12} {y:>12}");
    }
    Ok(())
}
