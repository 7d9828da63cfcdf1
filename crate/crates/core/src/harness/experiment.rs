//! Replicated simulation runs aggregated into bias / SD / coverage rows.
//!
//! Replication `r` of scenario `s` simulates from `derive(seed, [s, r])` and
//! fits method `m` with `derive(seed, [s, r, m + 1])`; regret draws share
//! `derive(seed, [s, r, 0])` across methods. Replications run on a rayon pool
//! and are collected in index order, so results do not depend on the number
//! of workers.

use std::time::Instant;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::{estimate, parameter_names, Inference, MethodEstimate};
use crate::error::{Error, Result};
use crate::seed;
use crate::simgen::{regime_value, sim_truth, simulate_dataset, Scenario};

/// Cells with more failed replications than this fraction are marked invalid.
pub const MAX_CELL_FAILURE_RATE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub method: String,
    pub parameter: String,
    pub truth: f64,
    pub mean_est: f64,
    pub bias: f64,
    /// Absent with fewer than two successful replications.
    pub sd: Option<f64>,
    pub ci_len: Option<f64>,
    pub coverage: Option<f64>,
    /// Successful replications.
    pub reps: usize,
    pub failures: usize,
    pub valid: bool,
    /// Summed fit time over replications, in seconds.
    pub wall_time: f64,
}

/// `scenario id/n=N`, the label result rows carry.
pub fn scenario_label(sc: &Scenario) -> String {
    format!("{}/n={}", sc.id(), sc.n)
}

fn method_label(method: super::Method, inf: Inference) -> String {
    format!("{}/{}", method.name(), inf.name())
}

struct Draw {
    fits: Vec<Option<MethodEstimate>>,
    regrets: Vec<Option<f64>>,
    seconds: Vec<f64>,
}

fn replicate(cfg: &ExperimentConfig, s_idx: usize, scenario: &Scenario, rep: usize) -> Draw {
    let sc = scenario.clone().with_seed(seed::derive(cfg.seed, &[s_idx as u64, rep as u64]));
    let design = sc.design();
    let k = cfg.methods.len();
    let data = match simulate_dataset(&sc) {
        Ok((d, _)) => d,
        Err(e) => {
            log::warn!("{} rep {rep}: simulation failed: {e}", scenario_label(scenario));
            return Draw { fits: vec![None; k], regrets: vec![None; k], seconds: vec![0.0; k] };
        }
    };
    let mut draw = Draw { fits: Vec::with_capacity(k), regrets: Vec::with_capacity(k), seconds: Vec::with_capacity(k) };
    for (m, plan) in cfg.methods.iter().enumerate() {
        let start = Instant::now();
        let mseed = seed::derive(cfg.seed, &[s_idx as u64, rep as u64, m as u64 + 1]);
        let fit = estimate(&data, &design, plan.method, &plan.inferences, &cfg.settings, mseed);
        draw.seconds.push(start.elapsed().as_secs_f64());
        match fit {
            Ok(fit) => {
                let regret = (cfg.value_mc > 0)
                    .then(|| {
                        let vseed = seed::derive(cfg.seed, &[s_idx as u64, rep as u64, 0]);
                        regime_value(scenario, &fit.regime(), cfg.value_mc, vseed).ok().map(|v| v.regret)
                    })
                    .flatten();
                draw.regrets.push(regret);
                draw.fits.push(Some(fit));
            }
            Err(e) => {
                log::warn!("{} rep {rep}: {} failed: {e}", scenario_label(scenario), plan.method);
                draw.regrets.push(None);
                draw.fits.push(None);
            }
        }
    }
    draw
}

fn mean_sd(v: &[f64]) -> (f64, Option<f64>) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.len() >= 2).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, sd)
}

/// Run every scenario × replication × method and aggregate per parameter.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut rows = Vec::new();
    for (s_idx, scenario) in cfg.scenarios.iter().enumerate() {
        let label = scenario_label(scenario);
        log::info!("{label}: {} replications", cfg.replications);
        let truth = sim_truth(scenario);
        let truth: Vec<f64> = truth.beta2_star.iter().chain(truth.beta1_star.iter()).copied().collect();
        let names = parameter_names(&scenario.design());
        let draws: Vec<Draw> = pool.install(|| {
            (0..cfg.replications).into_par_iter().map(|rep| replicate(cfg, s_idx, scenario, rep)).collect()
        });
        for (m, plan) in cfg.methods.iter().enumerate() {
            let ok: Vec<&MethodEstimate> = draws.iter().filter_map(|d| d.fits[m].as_ref()).collect();
            let failures = cfg.replications - ok.len();
            let valid = !ok.is_empty() && failures as f64 <= MAX_CELL_FAILURE_RATE * cfg.replications as f64;
            if !valid {
                log::warn!("{label}: {} failed in {failures} of {} replications; cell marked invalid", plan.method, cfg.replications);
            }
            let seconds: f64 = draws.iter().map(|d| d.seconds[m]).sum();
            for (k, &inf) in plan.inferences.iter().enumerate() {
                for (j, name) in names.iter().enumerate() {
                    let est: Vec<f64> = ok.iter().map(|f| f.coef[j]).collect();
                    let (mean_est, sd) = if est.is_empty() { (f64::NAN, None) } else { mean_sd(&est) };
                    let cis: Vec<(f64, f64)> = ok.iter().filter_map(|f| f.intervals[k].as_ref().map(|c| c[j])).collect();
                    let (ci_len, coverage) = if cis.is_empty() {
                        (None, None)
                    } else {
                        let len = cis.iter().map(|(lo, hi)| hi - lo).sum::<f64>() / cis.len() as f64;
                        let hit = cis.iter().filter(|(lo, hi)| *lo <= truth[j] && truth[j] <= *hi).count();
                        (Some(len), Some(hit as f64 / cis.len() as f64))
                    };
                    rows.push(ResultRow {
                        scenario: label.clone(),
                        method: method_label(plan.method, inf),
                        parameter: name.clone(),
                        truth: truth[j],
                        mean_est,
                        bias: mean_est - truth[j],
                        sd,
                        ci_len,
                        coverage,
                        reps: ok.len(),
                        failures,
                        valid,
                        wall_time: seconds,
                    });
                }
            }
            if cfg.value_mc > 0 {
                let regrets: Vec<f64> = draws.iter().filter_map(|d| d.regrets[m]).collect();
                let (mean, sd) = if regrets.is_empty() { (f64::NAN, None) } else { mean_sd(&regrets) };
                rows.push(ResultRow {
                    scenario: label.clone(),
                    method: plan.method.name().to_string(),
                    parameter: "regret".into(),
                    truth: 0.0,
                    mean_est: mean,
                    bias: mean,
                    sd,
                    ci_len: None,
                    coverage: None,
                    reps: regrets.len(),
                    failures: cfg.replications - regrets.len(),
                    valid,
                    wall_time: seconds,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "
[experiment]
replications = 4
seed = 5

[scenarios]
propensity = randomized
outcome = linear_r
n = 300

[methods]
proposed = sandwich
standard_q = none

[learners]
preset = parametric

[value]
n_mc = 2000
";

    #[test]
    fn rows_cover_every_parameter() {
        let cfg = ExperimentConfig::from_ini_str(SMALL).unwrap();
        let rows = run_experiment(&cfg).unwrap();
        // 7 coefficients per method plus one regret row each.
        assert_eq!(rows.len(), 2 * 8);
        assert_eq!(rows[0].scenario, "randomized/linear_r/n=300");
        assert_eq!(rows[0].method, "proposed/sandwich");
        assert_eq!(rows[1].parameter, "beta2_1");
        assert_eq!(rows[1].truth, 1.0);
        assert!(rows.iter().all(|r| r.reps == 4 && r.valid));
        assert!(rows[0].coverage.is_some());
        assert!(rows[8].coverage.is_none());
        assert!(rows.iter().filter(|r| r.parameter == "regret").all(|r| r.mean_est >= 0.0));
    }

    #[test]
    fn single_replication_has_no_sd() {
        let cfg = ExperimentConfig::from_ini_str(&SMALL.replace("replications = 4", "replications = 1")).unwrap();
        let rows = run_experiment(&cfg).unwrap();
        assert!(rows.iter().all(|r| r.sd.is_none()));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut cfg = ExperimentConfig::from_ini_str(SMALL).unwrap();
        cfg.workers = Some(1);
        let mut a = run_experiment(&cfg).unwrap();
        cfg.workers = Some(3);
        let mut b = run_experiment(&cfg).unwrap();
        for r in a.iter_mut().chain(b.iter_mut()) {
            r.wall_time = 0.0;
        }
        assert_eq!(a, b);
    }
}
