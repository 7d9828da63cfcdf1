//! One-shot analysis of a user dataset: estimate, SE and interval per blip term.

use std::fmt;

use super::{estimate, FitSettings, Inference, Method};
use crate::data::{Dataset, StageDesign};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisRow {
    /// 2 or 1.
    pub stage: u8,
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// The interval excludes zero.
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub method: Method,
    pub inference: Inference,
    pub ci_level: f64,
    pub n: usize,
    /// Stage-2 rows first, then stage 1; `d2 + d1` rows in all.
    pub rows: Vec<AnalysisRow>,
    /// Set for m-of-n intervals.
    pub p_hat: Option<f64>,
    pub resample_size: Option<usize>,
}

pub fn analyze(
    data: &Dataset,
    design: &StageDesign,
    method: Method,
    inference: Inference,
    settings: &FitSettings,
    seed: u64,
) -> Result<AnalysisReport> {
    settings.validate()?;
    design.validate(data)?;
    let fit = estimate(data, design, method, &[inference], settings, seed)?;
    let terms = design.stage2_labels(data).into_iter().map(|t| (2, t)).chain(design.stage1_labels(data).into_iter().map(|t| (1, t)));
    let rows = terms
        .enumerate()
        .map(|(j, (stage, term))| {
            let ci = fit.intervals[0].as_ref().map(|c| c[j]);
            AnalysisRow {
                stage,
                term,
                estimate: fit.coef[j],
                se: fit.se[j],
                lower: ci.map(|c| c.0),
                upper: ci.map(|c| c.1),
                significant: ci.is_some_and(|(lo, hi)| lo > 0.0 || hi < 0.0),
            }
        })
        .collect();
    Ok(AnalysisReport {
        method,
        inference,
        ci_level: settings.ci_level,
        n: data.n(),
        rows,
        p_hat: fit.p_hat,
        resample_size: fit.resample_size,
    })
}

impl fmt::Display for AnalysisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method {} with {} intervals at level {} (n = {})", self.method, self.inference, self.ci_level, self.n)?;
        if let (Some(p), Some(m)) = (self.p_hat, self.resample_size) {
            writeln!(f, "estimated non-regularity p = {p:.3}, resample size m = {m}")?;
        }
        let width = self.rows.iter().map(|r| r.term.len()).max().unwrap_or(4).max(4);
        writeln!(f, "{:<5} {:<width$} {:>10} {:>10} {:>22}", "stage", "term", "estimate", "se", "interval")?;
        for r in &self.rows {
            let ci = match (r.lower, r.upper) {
                (Some(lo), Some(hi)) => format!("({lo:.4}, {hi:.4})"),
                _ => String::new(),
            };
            let mark = if r.significant { " *" } else { "" };
            writeln!(f, "{:<5} {:<width$} {:>10.4} {:>10.4} {:>22}{mark}", r.stage, r.term, r.estimate, r.se, ci)?;
        }
        write!(f, "* interval excludes 0")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossfit::NuisanceSpecs;
    use crate::simgen::{simulate_dataset, Outcome, Propensity, Scenario};

    #[test]
    fn layout_and_flags() {
        let sc = Scenario::new(Propensity::Randomized, Outcome::LinearR, 1000, 21);
        let (data, _) = simulate_dataset(&sc).unwrap();
        let design = sc.design();
        let settings = FitSettings { specs: NuisanceSpecs::preset("parametric").unwrap(), ..Default::default() };
        let report = analyze(&data, &design, Method::Proposed, Inference::Sandwich, &settings, 4).unwrap();
        assert_eq!(report.rows.len(), design.d2() + design.d1());
        assert!(report.rows[..4].iter().all(|r| r.stage == 2));
        // True stage-2 blip is (0, 1, 1, 0) on R·(1, X₂₁, X₂₂, X₂₃).
        assert!(report.rows[1].significant && report.rows[2].significant);
        let text = report.to_string();
        // Title, column header, rows, footnote.
        assert_eq!(text.lines().count(), 3 + report.rows.len());
        let none = analyze(&data, &design, Method::Dwols, Inference::None, &settings, 4).unwrap();
        assert!(none.rows.iter().all(|r| r.lower.is_none() && !r.significant));
    }
}
