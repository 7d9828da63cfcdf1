//! `rql`: simulation studies, data analysis and truth oracles from the command line.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use robust_qlearn::baselines::LinearPseudo;
use robust_qlearn::crossfit::NuisanceSpecs;
use robust_qlearn::error::Error;
use robust_qlearn::estimator::PseudoMode;
use robust_qlearn::harness::config::ExperimentConfig;
use robust_qlearn::harness::report::{self, OutputFormat};
use robust_qlearn::harness::{self, analyze, FitSettings, Inference, Method, Schema};
use robust_qlearn::simgen::{self, Scenario, TRUTH_MC};

#[derive(Parser)]
#[command(name = "rql", version, about = "Robust Q-learning for two-stage binary treatment regimes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replicated simulation study from an INI config.
    Simulate(StudyArgs),
    /// Regret of each method's estimated regime over a simulation config.
    Value(StudyArgs),
    /// Estimate blip coefficients on a CSV dataset.
    Analyze(AnalyzeArgs),
    /// Monte Carlo projection of the true blip parameters for a scenario.
    Truth(TruthArgs),
    /// Write one simulated dataset as CSV plus a matching schema file.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `[output] path`; stdout when neither is given.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or markdown; defaults to the config, then the output extension.
    #[arg(long)]
    format: Option<String>,
    #[arg(long, env = "RQL_WORKERS")]
    workers: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, default_value = "proposed")]
    method: String,
    #[arg(long, default_value = "sandwich")]
    inference: String,
    #[arg(long, default_value_t = 0.05)]
    kappa: f64,
    #[arg(long, default_value_t = 500)]
    n_boot: usize,
    /// Nuisance learner preset (default, fast, rf, gam, parametric, rf-gam).
    #[arg(long, default_value = "default")]
    learners: String,
    #[arg(long, default_value_t = 2)]
    k_folds: usize,
    #[arg(long, default_value_t = 0.01)]
    clip_eps: f64,
    /// Build the pseudo-outcome from fitted nuisances instead of observed outcomes.
    #[arg(long)]
    model_pseudo: bool,
    /// Stage-1 pseudo-outcome of standard Q-learning: maxq or observed.
    #[arg(long, default_value = "maxq")]
    q_pseudo: String,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TruthArgs {
    /// `propensity/outcome[/varpi=V]`, e.g. `randomized/fgs_r`.
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = TRUTH_MC)]
    mc: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct GenerateArgs {
    /// `propensity/outcome[/varpi=V][/n=N]`.
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Schema path; defaults to the output path with an `.ini` extension.
    #[arg(long)]
    schema: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) | Error::Csv { .. } | Error::NonFinite { .. } => 1,
        _ => 2,
    }
}

fn study(args: &StudyArgs, value_only: bool) -> robust_qlearn::Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if args.workers.is_some() {
        cfg.workers = args.workers;
    }
    if value_only && cfg.value_mc == 0 {
        cfg.value_mc = 100_000;
    }
    let path = args.out.clone().or_else(|| cfg.output.as_ref().map(|o| o.path.clone()));
    let format = match (&args.format, &path) {
        (Some(f), _) => OutputFormat::parse(f)?,
        (None, Some(p)) if args.out.is_some() => OutputFormat::from_path(p),
        (None, _) => cfg.output.as_ref().map_or(OutputFormat::Csv, |o| o.format),
    };
    let mut rows = harness::run_experiment(&cfg)?;
    if value_only {
        rows.retain(|r| r.parameter == "regret");
    }
    for r in rows.iter().filter(|r| !r.valid) {
        log::warn!("{} {}: more than 10% of replications failed", r.scenario, r.method);
    }
    match path {
        Some(p) => report::emit_table(&rows, format, cfg.settings.ci_level, &p)?,
        None => match format {
            OutputFormat::Csv => print!("{}", report::to_csv(&rows)?),
            OutputFormat::Markdown => print!("{}", report::to_markdown(&rows, cfg.settings.ci_level)),
        },
    }
    Ok(())
}

fn run_analyze(args: &AnalyzeArgs) -> robust_qlearn::Result<()> {
    let schema = Schema::load(&args.schema)?;
    let data = harness::ingest_csv(&args.data, &schema)?;
    let design = schema.design(&data)?;
    let settings = FitSettings {
        specs: NuisanceSpecs::preset(&args.learners)?,
        k_folds: args.k_folds,
        clip_eps: args.clip_eps,
        mode: if args.model_pseudo { PseudoMode::Model } else { PseudoMode::Observed },
        q_pseudo: LinearPseudo::parse(&args.q_pseudo)?,
        ci_level: args.level,
        n_boot: args.n_boot,
        kappa: args.kappa,
    };
    let method = Method::parse(&args.method)?;
    let inference = Inference::parse(&args.inference)?;
    inference.check(method)?;
    let report = analyze(&data, &design, method, inference, &settings, args.seed)?;
    println!("{report}");
    Ok(())
}

fn run_truth(args: &TruthArgs) -> robust_qlearn::Result<()> {
    let sc = Scenario::parse(&args.scenario)?;
    if args.mc < 1000 {
        return Err(Error::Config(format!("--mc {} is too small (at least 1000)", args.mc)));
    }
    let b2 = simgen::project_true_beta2(&sc, args.mc, args.seed);
    let b1 = simgen::project_true_beta1(&sc, args.mc, args.seed.wrapping_add(1));
    println!("scenario {} with {} Monte Carlo draws", sc.id(), args.mc);
    println!("{:<10} {:>10} {:>10}", "parameter", "value", "mc_se");
    for (j, (b, s)) in b2.beta.iter().zip(b2.se.iter()).enumerate() {
        println!("{:<10} {b:>10.4} {s:>10.4}", format!("beta2_{j}"));
    }
    for (j, (b, s)) in b1.beta.iter().zip(b1.se.iter()).enumerate() {
        println!("{:<10} {b:>10.4} {s:>10.4}", format!("beta1_{j}"));
    }
    Ok(())
}

fn run_generate(args: &GenerateArgs) -> robust_qlearn::Result<()> {
    let sc = Scenario::parse(&args.scenario)?.with_seed(args.seed);
    let (data, _) = simgen::simulate_dataset(&sc)?;
    harness::write_csv(&data, &args.out)?;
    let schema = Schema::for_dataset(&data);
    let design = sc.design();
    let tokens = |f: &[robust_qlearn::data::Feature]| f.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ");
    let mut text = format!(
        "[columns]\nx1 = {}\na1 = {}\nx2 = {}\na2 = {}\ny = {}\n",
        schema.x1.join(", "),
        schema.a1,
        schema.x2.join(", "),
        schema.a2,
        schema.y
    );
    if let Some(r) = &schema.r {
        text.push_str(&format!("r = {r}\n"));
    }
    text.push_str(&format!(
        "\n[design]\nstage2 = {}\nstage1 = {}\nscale_by_r = {}\n",
        tokens(&design.stage2),
        tokens(&design.stage1),
        design.scale_by_r
    ));
    let schema_path = args.schema.clone().unwrap_or_else(|| args.out.with_extension("ini"));
    std::fs::write(&schema_path, text)?;
    eprintln!("wrote {} rows to {} and schema to {}", data.n(), args.out.display(), schema_path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => study(a, false),
        Command::Value(a) => study(a, true),
        Command::Analyze(a) => run_analyze(a),
        Command::Truth(a) => run_truth(a),
        Command::Generate(a) => run_generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
