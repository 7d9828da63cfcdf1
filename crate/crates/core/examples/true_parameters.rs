//! Print the population blip parameters for every simulation family.
//!
//! Closed forms are used where the blip is linear in the fitted regressors;
//! the others are weighted Monte Carlo projections.

use robust_qlearn::simgen::{project_true_beta2, sim_truth, Outcome, Propensity, Scenario};

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:7.3}")).collect::<Vec<_>>().join(" ")
}

fn main() {
    for propensity in Propensity::ALL {
        for outcome in Outcome::ALL {
            let varpis: &[u8] = if outcome.is_regular() { &[0] } else { &[0, 1] };
            for &varpi in varpis {
                let sc = Scenario::new(propensity, outcome, 2000, 0).with_varpi(varpi);
                let t = sim_truth(&sc);
                println!(
                    "{:40} beta2* = [{}]  beta1* = [{}]  V* = {:.3}",
                    sc.id(),
                    fmt(t.beta2_star.as_slice()),
                    fmt(t.beta1_star.as_slice()),
                    t.optimal_value
                );
            }
        }
    }

    // Two independent projections agree up to their Monte Carlo error.
    let sc = Scenario::new(Propensity::Randomized, Outcome::FgsR, 2000, 0);
    let a = project_true_beta2(&sc, 200_000, 1);
    let b = project_true_beta2(&sc, 200_000, 2);
    println!("\nFGS projection, seed 1: [{}] (se [{}])", fmt(a.beta.as_slice()), fmt(a.se.as_slice()));
    println!("FGS projection, seed 2: [{}] (se [{}])", fmt(b.beta.as_slice()), fmt(b.se.as_slice()));
}
