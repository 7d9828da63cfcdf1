//! Fit the residualized estimator, standard Q-learning and dWOLS on repeated
//! draws from one scenario and compare their stage-2 and stage-1 estimates.
//!
//! Usage: `cargo run --release --example compare_methods -- [PROPENSITY] [OUTCOME] [REPS] [PRESET]`
//! (defaults: `linear fgs_r 20 fast`).

use robust_qlearn::baselines::{fit_dwols, fit_standard_q};
use robust_qlearn::crossfit::NuisanceSpecs;
use robust_qlearn::simgen::{simulate_dataset, Outcome, Propensity, Scenario};
use robust_qlearn::{fit_robust_q, RobustQConfig};

fn summarize(name: &str, truth: &[f64], draws: &[Vec<f64>]) {
    let reps = draws.len() as f64;
    print!("{name:>12}");
    for (j, t) in truth.iter().enumerate() {
        let mean = draws.iter().map(|d| d[j]).sum::<f64>() / reps;
        let sd = (draws.iter().map(|d| (d[j] - mean).powi(2)).sum::<f64>() / (reps - 1.0)).sqrt();
        print!("  {:>7.3} ({:.3})", mean - t, sd);
    }
    println!();
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let propensity = Propensity::parse(args.first().map_or("linear", String::as_str))?;
    let outcome = Outcome::parse(args.get(1).map_or("fgs_r", String::as_str))?;
    let reps: u64 = args.get(2).map_or(Ok(20), |s| s.parse())?;
    let specs = NuisanceSpecs::preset(args.get(3).map_or("fast", String::as_str))?;

    let base = Scenario::new(propensity, outcome, 2000, 0);
    let design = base.design();
    let (mut proposed, mut standard, mut dwols) = (Vec::new(), Vec::new(), Vec::new());
    let mut truth = Vec::new();
    for rep in 0..reps {
        let (data, t) = simulate_dataset(&base.clone().with_seed(rep))?;
        truth = t.beta2_star.iter().chain(t.beta1_star.iter()).copied().collect();
        let fit = fit_robust_q(&data, &design, &RobustQConfig::with_specs(specs.clone()).seed(rep))?;
        proposed.push(fit.stage2.beta.iter().chain(fit.stage1.beta.iter()).copied().collect());
        standard.push(fit_standard_q(&data, &design)?.coefficients());
        dwols.push(fit_dwols(&data, &design)?.coefficients());
    }
    println!("{}: bias (SD) over {reps} replications, stage 2 then stage 1", base.id());
    println!("{:>12}  {}", "truth", truth.iter().map(|t| format!("{t:>15.3}")).collect::<String>());
    summarize("proposed", &truth, &proposed);
    summarize("standard Q", &truth, &standard);
    summarize("dWOLS", &truth, &dwols);
    Ok(())
}
