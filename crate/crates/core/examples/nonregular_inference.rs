//! Stage-1 coverage when the stage-2 blip is exactly zero. Sandwich intervals
//! for the residualized estimator are compared with m-out-of-n bootstrap
//! intervals for standard Q-learning, both crediting the observed outcome in
//! the stage-1 pseudo-outcome.
//!
//! Usage: `cargo run --release --example nonregular_inference -- [REPS] [PRESET]`
//! (defaults: `40 fast`).

use robust_qlearn::baselines::LinearPseudo;
use robust_qlearn::crossfit::NuisanceSpecs;
use robust_qlearn::harness::{estimate, FitSettings, Inference, Method};
use robust_qlearn::simgen::{simulate_dataset, Outcome, Propensity, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let reps: u64 = args.first().map_or(Ok(40), |s| s.parse())?;
    let settings = FitSettings {
        specs: NuisanceSpecs::preset(args.get(1).map_or("fast", String::as_str))?,
        n_boot: 200,
        q_pseudo: LinearPseudo::Observed,
        ..FitSettings::default()
    };
    let scenario = Scenario::new(Propensity::Linear, Outcome::NonlinearNr, 2000, 0).with_varpi(0);
    let design = scenario.design();
    let d2 = design.d2();
    let mut hits = [[0usize; 2]; 2];
    let mut m_used = 0;
    for rep in 0..reps {
        let (data, truth) = simulate_dataset(&scenario.clone().with_seed(rep))?;
        let fits = [
            estimate(&data, &design, Method::Proposed, &[Inference::Sandwich], &settings, rep)?,
            estimate(&data, &design, Method::StandardQ, &[Inference::MOfN], &settings, rep)?,
        ];
        m_used = fits[1].resample_size.unwrap_or(0);
        for (m, fit) in fits.iter().enumerate() {
            let ci = fit.intervals[0].as_ref().expect("interval requested");
            for (k, j) in [1, 2].into_iter().enumerate() {
                let t = truth.beta1_star[j];
                hits[m][k] += usize::from(ci[d2 + j].0 <= t && t <= ci[d2 + j].1);
            }
        }
    }
    println!("{}: stage-1 coverage over {reps} replications", scenario.id());
    for (name, h) in [("proposed / sandwich", hits[0]), ("standard Q / m-of-n", hits[1])] {
        println!("{name:>22}: beta1_1 {:.3}  beta1_2 {:.3}", h[0] as f64 / reps as f64, h[1] as f64 / reps as f64);
    }
    println!("last m-of-n resample size: {m_used}");
    Ok(())
}
