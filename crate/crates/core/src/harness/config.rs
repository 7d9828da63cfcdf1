//! INI experiment configuration.
//!
//! ```ini
//! [experiment]
//! replications = 100
//! seed = 1
//! k_folds = 2
//!
//! [scenarios]
//! propensity = randomized, linear
//! outcome = linear_r, fgs_r
//! varpi = 0
//! n = 2000
//!
//! [methods]
//! proposed = sandwich
//! standard_q = none
//! dwols = nofn
//!
//! [learners]
//! preset = default
//!
//! [output]
//! path = results.csv
//! format = csv
//! ```
//!
//! Optional keys: `experiment.clip_eps`, `experiment.ci_level`,
//! `experiment.pseudo` (observed | model), `experiment.q_pseudo` (maxq |
//! observed, standard Q only), `experiment.workers`,
//! `learners.mu1a|mu2a|mu1y|mu2y` (learner expressions overriding the preset),
//! `bootstrap.n_boot`, `bootstrap.kappa`, `value.n_mc` (adds regret rows when
//! positive).

use std::path::{Path, PathBuf};

use ini::{Ini, Properties};

use super::report::OutputFormat;
use super::{FitSettings, Inference, Method};
use crate::baselines::LinearPseudo;
use crate::crossfit::NuisanceSpecs;
use crate::error::{Error, Result};
use crate::estimator::PseudoMode;
use crate::learners::{LearnerSpec, Task};
use crate::simgen::{Outcome, Propensity, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub struct MethodPlan {
    pub method: Method,
    pub inferences: Vec<Inference>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub path: PathBuf,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Grid in config order; `seed` fields are unused (replication seeds are derived).
    pub scenarios: Vec<Scenario>,
    pub methods: Vec<MethodPlan>,
    pub replications: usize,
    pub seed: u64,
    pub settings: FitSettings,
    /// Monte Carlo draws per replication for regret rows; 0 disables them.
    pub value_mc: usize,
    pub workers: Option<usize>,
    pub output: Option<OutputSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenarios: Vec::new(),
            methods: Vec::new(),
            replications: 1,
            seed: 0,
            settings: FitSettings::default(),
            value_mc: 0,
            workers: None,
            output: None,
        }
    }
}

fn list(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect()
}

fn number<T: std::str::FromStr>(props: Option<&Properties>, key: &str) -> Result<Option<T>> {
    match props.and_then(|p| p.get(key)) {
        None => Ok(None),
        Some(v) => v.trim().parse().map(Some).map_err(|_| Error::Config(format!("'{key}' has invalid value '{v}'"))),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_ini_str(&text)
    }

    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str_noescape(text).map_err(|e| Error::Config(e.to_string()))?;
        let known = ["experiment", "scenarios", "methods", "learners", "bootstrap", "value", "output"];
        for name in ini.sections().flatten() {
            if !known.contains(&name) {
                return Err(Error::Config(format!("unknown section [{name}]")));
            }
        }
        let exp = ini.section(Some("experiment"));
        let mut cfg = ExperimentConfig::default();
        cfg.replications = number(exp, "replications")?.unwrap_or(1);
        cfg.seed = number(exp, "seed")?.unwrap_or(0);
        cfg.workers = number(exp, "workers")?;
        let s = &mut cfg.settings;
        s.k_folds = number(exp, "k_folds")?.unwrap_or(s.k_folds);
        s.clip_eps = number(exp, "clip_eps")?.unwrap_or(s.clip_eps);
        s.ci_level = number(exp, "ci_level")?.unwrap_or(s.ci_level);
        s.mode = match exp.and_then(|p| p.get("pseudo")).map(str::trim) {
            None | Some("observed") => PseudoMode::Observed,
            Some("model") => PseudoMode::Model,
            Some(other) => return Err(Error::Config(format!("pseudo must be observed or model, got '{other}'"))),
        };
        if let Some(v) = exp.and_then(|p| p.get("q_pseudo")) {
            s.q_pseudo = LinearPseudo::parse(v)?;
        }
        let boot = ini.section(Some("bootstrap"));
        s.n_boot = number(boot, "n_boot")?.unwrap_or(s.n_boot);
        s.kappa = number(boot, "kappa")?.unwrap_or(s.kappa);
        cfg.value_mc = number(ini.section(Some("value")), "n_mc")?.unwrap_or(0);

        let learners = ini.section(Some("learners"));
        let preset = learners.and_then(|p| p.get("preset")).unwrap_or("default");
        let mut specs = NuisanceSpecs::preset(preset.trim())?;
        if let Some(props) = learners {
            for (key, value) in props.iter() {
                let (slot, task) = match key {
                    "preset" => continue,
                    "mu1a" => (&mut specs.mu1a, Task::Probability),
                    "mu2a" => (&mut specs.mu2a, Task::Probability),
                    "mu1y" => (&mut specs.mu1y, Task::Regression),
                    "mu2y" => (&mut specs.mu2y, Task::Regression),
                    other => return Err(Error::Config(format!("unknown learner slot '{other}'"))),
                };
                *slot = LearnerSpec::parse(value, task)?;
            }
        }
        cfg.settings.specs = specs;

        let sc = ini.section(Some("scenarios")).ok_or_else(|| Error::Config("missing [scenarios] section".into()))?;
        let get = |key: &str| sc.get(key).ok_or_else(|| Error::Config(format!("[scenarios] needs '{key}'")));
        let propensities = list(get("propensity")?).into_iter().map(Propensity::parse).collect::<Result<Vec<_>>>()?;
        let outcomes = list(get("outcome")?).into_iter().map(Outcome::parse).collect::<Result<Vec<_>>>()?;
        let varpis = list(sc.get("varpi").unwrap_or("0"))
            .into_iter()
            .map(|v| v.parse::<u8>().map_err(|_| Error::Config(format!("invalid varpi '{v}'"))))
            .collect::<Result<Vec<_>>>()?;
        let ns = list(get("n")?)
            .into_iter()
            .map(|v| v.parse::<usize>().map_err(|_| Error::Config(format!("invalid n '{v}'"))))
            .collect::<Result<Vec<_>>>()?;
        for &p in &propensities {
            for &o in &outcomes {
                // ϖ does not affect regular outcomes; keep one cell for them.
                let vs: &[u8] = if o.is_regular() { &varpis[..1.min(varpis.len())] } else { &varpis };
                for &v in vs {
                    for &n in &ns {
                        let v = if o.is_regular() { 0 } else { v };
                        cfg.scenarios.push(Scenario::new(p, o, n, 0).with_varpi(v));
                    }
                }
            }
        }

        let methods = ini.section(Some("methods")).ok_or_else(|| Error::Config("missing [methods] section".into()))?;
        for (key, value) in methods.iter() {
            let method = Method::parse(key)?;
            let inferences = list(value).into_iter().map(Inference::parse).collect::<Result<Vec<_>>>()?;
            if inferences.is_empty() {
                return Err(Error::Config(format!("method '{key}' needs at least one inference (or none)")));
            }
            cfg.methods.push(MethodPlan { method, inferences });
        }

        if let Some(out) = ini.section(Some("output")) {
            if let Some(path) = out.get("path") {
                let format = match out.get("format") {
                    Some(f) => OutputFormat::parse(f)?,
                    None => OutputFormat::from_path(Path::new(path.trim())),
                };
                cfg.output = Some(OutputSpec { path: PathBuf::from(path.trim()), format });
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.scenarios.is_empty() {
            return Err(Error::Config("scenario grid is empty".into()));
        }
        for sc in &self.scenarios {
            sc.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        for (i, plan) in self.methods.iter().enumerate() {
            if self.methods[..i].iter().any(|p| p.method == plan.method) {
                return Err(Error::Config(format!("method '{}' listed twice", plan.method)));
            }
            for inf in &plan.inferences {
                inf.check(plan.method)?;
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        self.settings.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "
[experiment]
replications = 3
seed = 11

[scenarios]
propensity = randomized, interquad
outcome = linear_r, linear_nr
varpi = 0, 1
n = 200, 400

[methods]
proposed = sandwich, nofn
standard_q = none

[learners]
preset = fast
mu2y = rf(trees=50)
";

    #[test]
    fn parses_grid_in_order() {
        let cfg = ExperimentConfig::from_ini_str(BASIC).unwrap();
        assert_eq!(cfg.replications, 3);
        // Per propensity: linear_r × 2 n + linear_nr × 2 ϖ × 2 n.
        assert_eq!(cfg.scenarios.len(), 2 * (2 + 4));
        assert_eq!(cfg.scenarios[0].id(), "randomized/linear_r");
        assert_eq!(cfg.scenarios[0].n, 200);
        assert_eq!(cfg.scenarios[2].id(), "randomized/linear_nr/varpi=0");
        assert_eq!(cfg.methods[0].inferences, vec![Inference::Sandwich, Inference::NOfN]);
        assert!(matches!(cfg.settings.specs.mu2y, LearnerSpec::RandomForest(_)));
        assert!(matches!(cfg.settings.specs.mu1y, LearnerSpec::SuperLearner { .. }));
    }

    #[test]
    fn rejects_invalid_configs() {
        let zero = BASIC.replace("replications = 3", "replications = 0");
        assert!(ExperimentConfig::from_ini_str(&zero).is_err());
        let sandwich = BASIC.replace("standard_q = none", "standard_q = sandwich");
        assert!(ExperimentConfig::from_ini_str(&sandwich).is_err());
        let unknown = BASIC.replace("[learners]", "[learner]");
        assert!(ExperimentConfig::from_ini_str(&unknown).is_err());
        let bad_n = BASIC.replace("n = 200, 400", "n = 5");
        assert!(ExperimentConfig::from_ini_str(&bad_n).is_err());
        let bad_q = BASIC.replace("seed = 11", "seed = 11\nq_pseudo = best");
        assert!(ExperimentConfig::from_ini_str(&bad_q).is_err());
    }

    #[test]
    fn q_pseudo_defaults_to_max_q() {
        assert_eq!(ExperimentConfig::from_ini_str(BASIC).unwrap().settings.q_pseudo, LinearPseudo::MaxQ);
        let observed = BASIC.replace("seed = 11", "seed = 11\nq_pseudo = observed");
        assert_eq!(ExperimentConfig::from_ini_str(&observed).unwrap().settings.q_pseudo, LinearPseudo::Observed);
    }
}
