//! Round trip through the CSV path a user dataset would take: write a
//! simulated dataset and its schema, ingest them again and analyze with
//! every method.

use robust_qlearn::crossfit::NuisanceSpecs;
use robust_qlearn::harness::{analyze, ingest_csv, write_csv, FitSettings, Inference, Method, Schema};
use robust_qlearn::simgen::{simulate_dataset, Outcome, Propensity, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("rql-csv-analysis");
    std::fs::create_dir_all(&dir)?;
    let data_path = dir.join("trial.csv");

    let scenario = Scenario::new(Propensity::Randomized, Outcome::LinearR, 1000, 5);
    let (simulated, _) = simulate_dataset(&scenario)?;
    write_csv(&simulated, &data_path)?;

    let schema = Schema::from_ini_str(
        "[columns]\n\
         x1 = X1_1, X1_2, X1_3, X1_4, X1_5\n\
         a1 = a1\n\
         x2 = X2_1, X2_2, X2_3, X2_4, X2_5\n\
         a2 = a2\n\
         y = y\n\
         r = r\n\
         [design]\n\
         stage2 = 1, x2:X2_1, x2:X2_2, x2:X2_3\n\
         stage1 = 1, x1:X1_1, x1:X1_2\n",
    )?;
    let data = ingest_csv(&data_path, &schema)?;
    assert_eq!(data, simulated, "CSV round trip is exact");
    let design = schema.design(&data)?;

    let settings = FitSettings { specs: NuisanceSpecs::preset("fast")?, n_boot: 200, ..FitSettings::default() };
    for (method, inference) in [(Method::Proposed, Inference::Sandwich), (Method::Dwols, Inference::NOfN), (Method::StandardQ, Inference::MOfN)] {
        println!("{}\n", analyze(&data, &design, method, inference, &settings, 1)?);
    }
    Ok(())
}
