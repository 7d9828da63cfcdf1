//! Simulate one dataset, fit the residualized two-stage estimator and print
//! both stages with sandwich intervals next to the true parameters.

use robust_qlearn::crossfit::NuisanceSpecs;
use robust_qlearn::simgen::{simulate_dataset, Outcome, Propensity, Scenario};
use robust_qlearn::{fit_robust_q, RobustQConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = Scenario::new(Propensity::Linear, Outcome::LinearR, 2000, 7);
    let (data, truth) = simulate_dataset(&scenario)?;
    let design = scenario.design();

    let config = RobustQConfig::with_specs(NuisanceSpecs::preset("fast")?).seed(7);
    let fit = fit_robust_q(&data, &design, &config)?;

    println!("{} with n = {}", scenario.id(), data.n());
    for (stage, est, labels, target) in [
        (2, &fit.stage2, design.stage2_labels(&data), &truth.beta2_star),
        (1, &fit.stage1, design.stage1_labels(&data), &truth.beta1_star),
    ] {
        let ci = est.wald_ci(0.95)?;
        for (j, label) in labels.iter().enumerate() {
            println!(
                "stage {stage} {label:>5}: {:7.3}  95% CI ({:7.3}, {:7.3})  truth {:6.3}",
                est.beta[j], ci[j].0, ci[j].1, target[j]
            );
        }
    }

    let regime = fit.regime();
    let row = data.row(0);
    let w: Vec<f64> = design.stage1.iter().map(|f| f.eval(&row.x1, row.a1, &row.x2)).collect();
    let s: Vec<f64> = design.stage2.iter().map(|f| f.eval(&row.x1, row.a1, &row.x2)).collect();
    println!("recommended (A1, A2) for subject 0: {:?}", regime.decide(&w, &s)?);
    Ok(())
}
