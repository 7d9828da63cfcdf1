//! Stack a learner library on a nonlinear regression problem and show the
//! cross-validated risk of each base learner next to its simplex weight.

use nalgebra::DMatrix;
use rand::Rng;
use robust_qlearn::learners::{LearnerSpec, Model, Task};
use robust_qlearn::seed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = seed::rng(3);
    let n = 600;
    let x = DMatrix::<f64>::from_fn(n, 4, |_, _| rng.random_range(-1.0..1.0));
    let truth = |i: usize| (3.0 * x[(i, 0)]).sin() + x[(i, 1)].powi(2) + 0.5 * x[(i, 2)];
    let y: Vec<f64> = (0..n).map(|i| truth(i) + rng.random_range(-0.5..0.5)).collect();

    let spec = LearnerSpec::parse("sl(v=5, mean, glm, spline(5), kernel, rf(trees=200))", Task::Regression)?;
    let fitted = spec.fit(&x, &y, Task::Regression, 11)?;
    let Model::Stack(stack) = &fitted.model else { unreachable!("sl(...) always fits a stack") };
    println!("{:>24} {:>10} {:>8}", "learner", "CV risk", "weight");
    for ((name, risk), w) in stack.names.iter().zip(&stack.cv_risks).zip(&stack.weights) {
        println!("{name:>24} {risk:>10.4} {w:>8.3}");
    }
    println!("{:>24} {:>10.4}", "stack", stack.stack_risk);

    let fit = fitted.predict(&x)?;
    let mse = (0..n).map(|i| (fit[i] - truth(i)).powi(2)).sum::<f64>() / n as f64;
    println!("in-sample MSE against the noise-free truth: {mse:.4}");
    Ok(())
}
