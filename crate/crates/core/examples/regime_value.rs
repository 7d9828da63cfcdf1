//! Value and regret of the regimes each method estimates, on common random
//! numbers, against the optimal regime.
//!
//! Usage: `cargo run --release --example regime_value -- [N] [REPS] [PRESET]`
//! (defaults: `500 10 fast`).

use robust_qlearn::crossfit::NuisanceSpecs;
use robust_qlearn::harness::{estimate, FitSettings, Method};
use robust_qlearn::simgen::{regime_value, simulate_dataset, Outcome, Propensity, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().map_or(Ok(500), |s| s.parse())?;
    let reps: u64 = args.get(1).map_or(Ok(10), |s| s.parse())?;
    let settings = FitSettings { specs: NuisanceSpecs::preset(args.get(2).map_or("fast", String::as_str))?, ..FitSettings::default() };
    let scenario = Scenario::new(Propensity::InterQuad, Outcome::FgsR, n, 0);
    let design = scenario.design();
    let mut regret = vec![0.0; Method::ALL.len()];
    let mut optimal = 0.0;
    for rep in 0..reps {
        let (data, _) = simulate_dataset(&scenario.clone().with_seed(rep))?;
        for (m, method) in Method::ALL.into_iter().enumerate() {
            let fit = estimate(&data, &design, method, &[], &settings, rep)?;
            let v = regime_value(&scenario, &fit.regime(), 100_000, 1000 + rep)?;
            regret[m] += v.regret / reps as f64;
            optimal = v.optimal_value;
        }
    }
    println!("{} n = {n}: optimal value {optimal:.3}", scenario.id());
    for (method, r) in Method::ALL.iter().zip(regret) {
        println!("{:>12}: mean regret {r:.4}", method.name());
    }
    Ok(())
}
