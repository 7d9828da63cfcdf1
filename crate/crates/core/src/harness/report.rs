//! CSV and markdown emission of [`ResultRow`]s.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use statrs::distribution::{Binomial, Discrete};

use super::experiment::ResultRow;
use crate::error::{Error, Result};
use crate::simgen::Propensity;

pub const CSV_HEADER: [&str; 10] =
    ["scenario", "method", "parameter", "truth", "mean_est", "bias", "sd", "ci_len", "coverage", "reps"];

/// Significance level of the coverage dagger.
pub const DAGGER_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Markdown,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "markdown" | "md" => Ok(OutputFormat::Markdown),
            other => Err(Error::Config(format!("unknown output format '{other}' (csv, markdown)"))),
        }
    }

    /// `.md` / `.markdown` extensions select markdown; anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("md") | Some("markdown") => OutputFormat::Markdown,
            _ => OutputFormat::Csv,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.method.clone(),
            r.parameter.clone(),
            r.truth.to_string(),
            r.mean_est.to_string(),
            r.bias.to_string(),
            opt(r.sd),
            opt(r.ci_len),
            opt(r.coverage),
            r.reps.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

/// Parse a results CSV. Columns absent from the file come back as
/// `failures = 0`, `valid = true` and `wall_time = 0`.
pub fn read_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Csv { line: 1, msg: format!("expected header {}", CSV_HEADER.join(",")) });
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::Csv { line, msg: format!("{} is not a number: '{}'", CSV_HEADER[i], &rec[i]) })
        };
        let opt_num = |i: usize| -> Result<Option<f64>> { if rec[i].is_empty() { Ok(None) } else { num(i).map(Some) } };
        rows.push(ResultRow {
            scenario: rec[0].to_string(),
            method: rec[1].to_string(),
            parameter: rec[2].to_string(),
            truth: num(3)?,
            mean_est: num(4)?,
            bias: num(5)?,
            sd: opt_num(6)?,
            ci_len: opt_num(7)?,
            coverage: opt_num(8)?,
            reps: rec[9].parse().map_err(|_| Error::Csv { line, msg: format!("reps is not a count: '{}'", &rec[9]) })?,
            failures: 0,
            valid: true,
            wall_time: 0.0,
        });
    }
    Ok(rows)
}

/// Two-sided exact binomial p-value: total mass of outcomes no likelier than `k`.
pub fn binomial_p_value(k: u64, n: u64, p: f64) -> f64 {
    let Ok(dist) = Binomial::new(p, n) else { return 1.0 };
    let observed = dist.pmf(k) * (1.0 + 1e-7);
    (0..=n).map(|i| dist.pmf(i)).filter(|&m| m <= observed).sum::<f64>().min(1.0)
}

/// Whether `coverage` over `reps` replications differs from `nominal` at [`DAGGER_ALPHA`].
pub fn coverage_dagger(coverage: f64, reps: usize, nominal: f64) -> bool {
    let k = (coverage * reps as f64).round() as u64;
    reps > 0 && binomial_p_value(k, reps as u64, nominal) < DAGGER_ALPHA
}

fn propensity_of(scenario: &str) -> String {
    let head = scenario.split('/').next().unwrap_or(scenario);
    Propensity::parse(head).map(|p| p.label().to_string()).unwrap_or_else(|_| head.to_string())
}

/// Markdown tables, one per treatment-assignment model in first-seen order.
/// Coverage cells significantly away from `nominal` carry a dagger.
pub fn to_markdown(rows: &[ResultRow], nominal: f64) -> String {
    let mut groups: Vec<(String, Vec<&ResultRow>)> = Vec::new();
    for r in rows {
        let g = propensity_of(&r.scenario);
        match groups.iter_mut().find(|(name, _)| *name == g) {
            Some((_, v)) => v.push(r),
            None => groups.push((g, vec![r])),
        }
    }
    let f = |v: f64| format!("{v:.3}");
    let mut out = String::new();
    for (name, group) in groups {
        let _ = writeln!(out, "### {name}\n");
        out.push_str("| Scenario | Method | Parameter | Truth | Bias | S.D. | CI length | Coverage | Reps |\n");
        out.push_str("|---|---|---|---:|---:|---:|---:|---:|---:|\n");
        for r in group {
            let scenario = r.scenario.split_once('/').map_or(r.scenario.as_str(), |(_, rest)| rest);
            let coverage = r.coverage.map_or(String::new(), |c| {
                let mark = if coverage_dagger(c, r.reps, nominal) { "†" } else { "" };
                format!("{c:.3}{mark}")
            });
            let reps = if r.valid { r.reps.to_string() } else { format!("{} (invalid)", r.reps) };
            let _ = writeln!(
                out,
                "| {scenario} | {} | {} | {} | {} | {} | {} | {coverage} | {reps} |",
                r.method,
                r.parameter,
                f(r.truth),
                f(r.bias),
                r.sd.map_or(String::new(), f),
                r.ci_len.map_or(String::new(), f),
            );
        }
        out.push('\n');
    }
    if out.is_empty() {
        out.push_str("_no results_\n");
    } else {
        let _ = writeln!(out, "† coverage differs from the nominal {nominal} level (exact binomial test, {DAGGER_ALPHA} level).");
    }
    out
}

/// Write `rows` to `path`.
pub fn emit_table(rows: &[ResultRow], format: OutputFormat, nominal: f64, path: &Path) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => to_csv(rows)?,
        OutputFormat::Markdown => to_markdown(rows, nominal),
    };
    fs::write(path, text)?;
    Ok(())
}
