//! A small replicated study driven by the same INI configuration the `rql
//! simulate` command reads, emitted as a markdown table.
//!
//! Usage: `cargo run --release --example simulation_study -- [CONFIG]`

use robust_qlearn::harness::config::ExperimentConfig;
use robust_qlearn::harness::report::to_markdown;
use robust_qlearn::harness::run_experiment;

const DEFAULT_CONFIG: &str = "
[experiment]
replications = 20
seed = 2024

[scenarios]
propensity = randomized, linear
outcome = linear_r, fgs_r
n = 1000

[methods]
proposed = sandwich
standard_q = none
dwols = none

[learners]
preset = fast
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => ExperimentConfig::from_ini_str(DEFAULT_CONFIG)?,
    };
    let rows = run_experiment(&config)?;
    print!("{}", to_markdown(&rows, config.settings.ci_level));
    Ok(())
}
