//! Inject the true nuisance functions into the residualized estimator and
//! compare with cross-fitted learners on the same draws. The gap isolates the
//! error contributed by nuisance estimation.
//!
//! Usage: `cargo run --release --example oracle_nuisances -- [PROPENSITY] [OUTCOME] [REPS] [PRESET]`

use robust_qlearn::crossfit::NuisanceSpecs;
use robust_qlearn::estimator::fit_with_nuisances;
use robust_qlearn::simgen::{simulate_dataset, true_nuisances, Outcome, Propensity, Scenario};
use robust_qlearn::{fit_robust_q, PseudoMode, RobustQConfig};

fn report(name: &str, truth: &[f64], draws: &[Vec<f64>]) {
    let reps = draws.len() as f64;
    print!("{name:>10}");
    for (j, t) in truth.iter().enumerate() {
        let mean = draws.iter().map(|d| d[j]).sum::<f64>() / reps;
        let sd = (draws.iter().map(|d| (d[j] - mean).powi(2)).sum::<f64>() / (reps - 1.0)).sqrt();
        print!("  {:>7.3} ({:.3})", mean - t, sd);
    }
    println!();
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let propensity = Propensity::parse(args.first().map_or("interquad", String::as_str))?;
    let outcome = Outcome::parse(args.get(1).map_or("fgs_r", String::as_str))?;
    let reps: u64 = args.get(2).map_or(Ok(20), |s| s.parse())?;
    let specs = NuisanceSpecs::preset(args.get(3).map_or("fast", String::as_str))?;

    let base = Scenario::new(propensity, outcome, 2000, 0);
    let design = base.design();
    let (mut oracle, mut learned, mut truth) = (Vec::new(), Vec::new(), Vec::new());
    let (mut true_a, mut true_y) = (Vec::new(), Vec::new());
    for rep in 0..reps {
        let (data, t) = simulate_dataset(&base.clone().with_seed(rep))?;
        truth = t.beta2_star.iter().chain(t.beta1_star.iter()).copied().collect();
        let nuis = true_nuisances(&base, &data, 200, rep)?;
        let fit = fit_with_nuisances(&data, &design, &nuis, PseudoMode::Observed)?;
        oracle.push(fit.stage2.beta.iter().chain(fit.stage1.beta.iter()).copied().collect());
        let fit = fit_robust_q(&data, &design, &RobustQConfig::with_specs(specs.clone()).seed(rep))?;
        learned.push(fit.stage2.beta.iter().chain(fit.stage1.beta.iter()).copied().collect());

        // Swap in one family of true nuisances at a time.
        let mut mixed = fit.nuisances.clone();
        mixed.mu1a.clone_from(&nuis.mu1a);
        mixed.mu2a.clone_from(&nuis.mu2a);
        let f = fit_with_nuisances(&data, &design, &mixed, PseudoMode::Observed)?;
        true_a.push(f.stage2.beta.iter().chain(f.stage1.beta.iter()).copied().collect());
        let mut mixed = fit.nuisances.clone();
        mixed.mu1y.clone_from(&nuis.mu1y);
        mixed.mu2y.clone_from(&nuis.mu2y);
        let f = fit_with_nuisances(&data, &design, &mixed, PseudoMode::Observed)?;
        true_y.push(f.stage2.beta.iter().chain(f.stage1.beta.iter()).copied().collect());
    }
    println!("{}: bias (SD) over {reps} replications", base.id());
    report("oracle", &truth, &oracle);
    report("learned", &truth, &learned);
    report("true μA", &truth, &true_a);
    report("true μY", &truth, &true_y);
    Ok(())
}
