//! Two-stage trajectories, column-oriented datasets and the feature maps that
//! turn raw histories into blip regressors.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One subject's record `(X₁, A₁, X₂, A₂, Y)` with an optional response indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x1: Vec<f64>,
    pub a1: u8,
    pub x2: Vec<f64>,
    /// `None` when no stage-2 treatment was assigned (e.g. responders).
    pub a2: Option<u8>,
    pub y: f64,
    pub r: Option<u8>,
}

/// Immutable column-oriented collection of trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x1: DMatrix<f64>,
    x2: DMatrix<f64>,
    a1: Vec<u8>,
    a2: Vec<Option<u8>>,
    y: Vec<f64>,
    r: Vec<Option<u8>>,
    x1_names: Vec<String>,
    x2_names: Vec<String>,
}

fn check_binary(v: u8, row: usize, what: &str) -> Result<()> {
    if v > 1 {
        return Err(Error::InvalidInput(format!(
            "row {row}: {what} must be 0 or 1, got {v}"
        )));
    }
    Ok(())
}

impl Dataset {
    pub fn from_rows(rows: &[Trajectory]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidInput("dataset must contain at least one row".into()));
        }
        let p1 = rows[0].x1.len();
        let p2 = rows[0].x2.len();
        let mut x1 = DMatrix::zeros(n, p1);
        let mut x2 = DMatrix::zeros(n, p2);
        let mut a1 = Vec::with_capacity(n);
        let mut a2 = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut r = Vec::with_capacity(n);
        for (i, t) in rows.iter().enumerate() {
            if t.x1.len() != p1 || t.x2.len() != p2 {
                return Err(Error::InvalidInput(format!(
                    "row {i}: covariate dimensions ({}, {}) differ from ({p1}, {p2})",
                    t.x1.len(),
                    t.x2.len()
                )));
            }
            for (j, &v) in t.x1.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: i, what: format!("x1[{j}]") });
                }
                x1[(i, j)] = v;
            }
            for (j, &v) in t.x2.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: i, what: format!("x2[{j}]") });
                }
                x2[(i, j)] = v;
            }
            if !t.y.is_finite() {
                return Err(Error::NonFinite { row: i, what: "y".into() });
            }
            check_binary(t.a1, i, "a1")?;
            if let Some(v) = t.a2 {
                check_binary(v, i, "a2")?;
            }
            if let Some(v) = t.r {
                check_binary(v, i, "r")?;
            }
            a1.push(t.a1);
            a2.push(t.a2);
            y.push(t.y);
            r.push(t.r);
        }
        Ok(Dataset {
            x1,
            x2,
            a1,
            a2,
            y,
            r,
            x1_names: (1..=p1).map(|j| format!("X1_{j}")).collect(),
            x2_names: (1..=p2).map(|j| format!("X2_{j}")).collect(),
        })
    }

    pub fn with_names(mut self, x1_names: Vec<String>, x2_names: Vec<String>) -> Result<Self> {
        if x1_names.len() != self.p1() || x2_names.len() != self.p2() {
            return Err(Error::InvalidInput("column name count does not match covariates".into()));
        }
        self.x1_names = x1_names;
        self.x2_names = x2_names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
    pub fn p1(&self) -> usize {
        self.x1.ncols()
    }
    pub fn p2(&self) -> usize {
        self.x2.ncols()
    }
    pub fn x1(&self) -> &DMatrix<f64> {
        &self.x1
    }
    pub fn x2(&self) -> &DMatrix<f64> {
        &self.x2
    }
    pub fn a1(&self) -> &[u8] {
        &self.a1
    }
    pub fn a2(&self) -> &[Option<u8>] {
        &self.a2
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    pub fn r(&self) -> &[Option<u8>] {
        &self.r
    }
    pub fn x1_names(&self) -> &[String] {
        &self.x1_names
    }
    pub fn x2_names(&self) -> &[String] {
        &self.x2_names
    }

    pub fn row(&self, i: usize) -> Trajectory {
        Trajectory {
            x1: self.x1.row(i).iter().copied().collect(),
            a1: self.a1[i],
            x2: self.x2.row(i).iter().copied().collect(),
            a2: self.a2[i],
            y: self.y[i],
            r: self.r[i],
        }
    }

    pub fn rows(&self) -> Vec<Trajectory> {
        (0..self.n()).map(|i| self.row(i)).collect()
    }

    /// Rows at `idx` (repeats allowed), e.g. a bootstrap resample.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let m = idx.len();
        let mut x1 = DMatrix::zeros(m, self.p1());
        let mut x2 = DMatrix::zeros(m, self.p2());
        for (k, &i) in idx.iter().enumerate() {
            x1.set_row(k, &self.x1.row(i));
            x2.set_row(k, &self.x2.row(i));
        }
        Dataset {
            x1,
            x2,
            a1: idx.iter().map(|&i| self.a1[i]).collect(),
            a2: idx.iter().map(|&i| self.a2[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            r: idx.iter().map(|&i| self.r[i]).collect(),
            x1_names: self.x1_names.clone(),
            x2_names: self.x2_names.clone(),
        }
    }

    /// Same covariates and treatments with a replaced outcome column.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Dataset> {
        if y.len() != self.n() {
            return Err(Error::InvalidInput("outcome length mismatch".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, what: "y".into() });
        }
        Ok(Dataset { y, ..self.clone() })
    }

    /// Rows with an observed stage-2 treatment.
    pub fn a2_observed(&self) -> Vec<bool> {
        self.a2.iter().map(Option::is_some).collect()
    }
}

/// A single term of a stage feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Intercept,
    X1(usize),
    X2(usize),
    A1,
}

impl Feature {
    fn value(&self, data: &Dataset, i: usize) -> f64 {
        match *self {
            Feature::Intercept => 1.0,
            Feature::X1(j) => data.x1[(i, j)],
            Feature::X2(j) => data.x2[(i, j)],
            Feature::A1 => f64::from(data.a1[i]),
        }
    }

    /// Evaluate on a raw history.
    pub fn eval(&self, x1: &[f64], a1: u8, x2: &[f64]) -> f64 {
        match *self {
            Feature::Intercept => 1.0,
            Feature::X1(j) => x1[j],
            Feature::X2(j) => x2[j],
            Feature::A1 => f64::from(a1),
        }
    }

    pub fn label(&self, data: &Dataset) -> String {
        match *self {
            Feature::Intercept => "1".into(),
            Feature::X1(j) => data.x1_names[j].clone(),
            Feature::X2(j) => data.x2_names[j].clone(),
            Feature::A1 => "A1".into(),
        }
    }

    /// Parse `1`, `a1`, `x1:<name|index>` or `x2:<name|index>` (indices 1-based).
    pub fn parse(token: &str, x1_names: &[String], x2_names: &[String]) -> Result<Feature> {
        let t = token.trim();
        if t == "1" || t.eq_ignore_ascii_case("intercept") {
            return Ok(Feature::Intercept);
        }
        if t.eq_ignore_ascii_case("a1") {
            return Ok(Feature::A1);
        }
        let (block, name) = t
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("feature `{t}` must be 1, a1, x1:NAME or x2:NAME")))?;
        let lookup = |names: &[String]| -> Result<usize> {
            if let Some(p) = names.iter().position(|n| n == name) {
                return Ok(p);
            }
            match name.parse::<usize>() {
                Ok(k) if k >= 1 && k <= names.len() => Ok(k - 1),
                _ => Err(Error::Config(format!("unknown column `{name}` in feature `{t}`"))),
            }
        };
        match block.to_ascii_lowercase().as_str() {
            "x1" => Ok(Feature::X1(lookup(x1_names)?)),
            "x2" => Ok(Feature::X2(lookup(x2_names)?)),
            _ => Err(Error::Config(format!("unknown feature block `{block}`"))),
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::Intercept => write!(f, "1"),
            Feature::X1(j) => write!(f, "x1:{}", j + 1),
            Feature::X2(j) => write!(f, "x2:{}", j + 1),
            Feature::A1 => write!(f, "a1"),
        }
    }
}

/// Feature maps for both stages.
///
/// `stage2` builds S from `(x1, a1, x2)`, optionally multiplied by the response
/// indicator; `stage1` builds W from `x1`. The history maps select the
/// conditioning features handed to the nuisance learners.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDesign {
    pub stage2: Vec<Feature>,
    pub scale_by_r: bool,
    pub stage1: Vec<Feature>,
    pub stage2_history: Vec<Feature>,
    pub stage1_history: Vec<Feature>,
}

impl StageDesign {
    /// Full histories `S⁰ = (X₁, A₁, X₂)` and `W⁰ = X₁`.
    pub fn new(stage2: Vec<Feature>, scale_by_r: bool, stage1: Vec<Feature>, p1: usize, p2: usize) -> Self {
        let mut s0: Vec<Feature> = (0..p1).map(Feature::X1).collect();
        s0.push(Feature::A1);
        s0.extend((0..p2).map(Feature::X2));
        StageDesign {
            stage2,
            scale_by_r,
            stage1,
            stage2_history: s0,
            stage1_history: (0..p1).map(Feature::X1).collect(),
        }
    }

    /// `S = R·(1, X₂₁, X₂₂, X₂₃)`, `W = (1, X₁₁, X₁₂)` on five-dimensional covariates.
    pub fn simulation_regular() -> Self {
        StageDesign::new(
            vec![Feature::Intercept, Feature::X2(0), Feature::X2(1), Feature::X2(2)],
            true,
            vec![Feature::Intercept, Feature::X1(0), Feature::X1(1)],
            5,
            5,
        )
    }

    /// `S = R·(1, A₁, X₂₁, X₂₂)`, `W = (1, X₁₁, X₁₂)`, used when stage-2 effects depend on A₁.
    pub fn simulation_interaction() -> Self {
        StageDesign::new(
            vec![Feature::Intercept, Feature::A1, Feature::X2(0), Feature::X2(1)],
            true,
            vec![Feature::Intercept, Feature::X1(0), Feature::X1(1)],
            5,
            5,
        )
    }

    pub fn d1(&self) -> usize {
        self.stage1.len()
    }
    pub fn d2(&self) -> usize {
        self.stage2.len()
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if self.stage1.is_empty() || self.stage2.is_empty() {
            return Err(Error::InvalidInput("stage feature maps must be nonempty".into()));
        }
        if self.stage1_history.is_empty() || self.stage2_history.is_empty() {
            return Err(Error::InvalidInput("history feature maps must be nonempty".into()));
        }
        for f in self.stage1.iter().chain(&self.stage1_history) {
            if matches!(f, Feature::X2(_) | Feature::A1) {
                return Err(Error::InvalidInput(format!(
                    "stage-1 features may only use baseline covariates, got {f}"
                )));
            }
        }
        for f in self
            .stage1
            .iter()
            .chain(&self.stage2)
            .chain(&self.stage1_history)
            .chain(&self.stage2_history)
        {
            match *f {
                Feature::X1(j) if j >= data.p1() => {
                    return Err(Error::InvalidInput(format!("feature {f} out of range (p1 = {})", data.p1())))
                }
                Feature::X2(j) if j >= data.p2() => {
                    return Err(Error::InvalidInput(format!("feature {f} out of range (p2 = {})", data.p2())))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn stage2_labels(&self, data: &Dataset) -> Vec<String> {
        self.stage2.iter().map(|f| f.label(data)).collect()
    }
    pub fn stage1_labels(&self, data: &Dataset) -> Vec<String> {
        self.stage1.iter().map(|f| f.label(data)).collect()
    }
}

/// Design matrices produced from a dataset: blip regressors S and W plus the
/// learner conditioning sets S⁰ and W⁰.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    pub s: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub s0: DMatrix<f64>,
    pub w0: DMatrix<f64>,
}

fn fill(data: &Dataset, features: &[Feature], what: &str) -> Result<DMatrix<f64>> {
    let n = data.n();
    let mut m = DMatrix::zeros(n, features.len());
    for (j, f) in features.iter().enumerate() {
        for i in 0..n {
            let v = f.value(data, i);
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, what: format!("{what} feature {f}") });
            }
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

/// Evaluate the stage feature maps row by row.
///
/// S rows are zero whenever A₂ is missing, and multiplied by R when the design
/// asks for eligibility scaling (a missing R is then an error).
pub fn build_design_matrices(data: &Dataset, design: &StageDesign) -> Result<DesignMatrices> {
    design.validate(data)?;
    let mut s = fill(data, &design.stage2, "stage-2")?;
    for i in 0..data.n() {
        let factor = if data.a2[i].is_none() {
            0.0
        } else if design.scale_by_r {
            match data.r[i] {
                Some(r) => f64::from(r),
                None => {
                    return Err(Error::InvalidInput(format!(
                        "row {i}: response indicator missing but the stage-2 map is scaled by R"
                    )))
                }
            }
        } else {
            1.0
        };
        if factor != 1.0 {
            for j in 0..s.ncols() {
                s[(i, j)] *= factor;
            }
        }
    }
    Ok(DesignMatrices {
        s,
        w: fill(data, &design.stage1, "stage-1")?,
        s0: fill(data, &design.stage2_history, "stage-2 history")?,
        w0: fill(data, &design.stage1_history, "stage-1 history")?,
    })
}

/// Per-row cross-fitted nuisance predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceEstimates {
    pub mu1a: Vec<f64>,
    pub mu2a: Vec<f64>,
    pub mu1y: Vec<f64>,
    pub mu2y: Vec<f64>,
    pub fold_of: Vec<usize>,
    pub clip_eps: f64,
}

impl NuisanceEstimates {
    pub fn n(&self) -> usize {
        self.mu1a.len()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let lens = [self.mu1a.len(), self.mu2a.len(), self.mu1y.len(), self.mu2y.len(), self.fold_of.len()];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::InvalidInput(format!("nuisance vectors must have length {n}")));
        }
        for (name, v) in [("mu1y", &self.mu1y), ("mu2y", &self.mu2y), ("mu1a", &self.mu1a), ("mu2a", &self.mu2a)] {
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite { row: i, what: name.into() });
            }
        }
        Ok(())
    }
}

/// Clip a probability into `[eps, 1 − eps]`.
pub fn clip_probability(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

/// One stage's point estimate and sandwich inference.
#[derive(Debug, Clone, PartialEq)]
pub struct StageFit {
    pub beta: DVector<f64>,
    pub vhat: DMatrix<f64>,
    pub qhat: DMatrix<f64>,
    /// Stage-1 cross-stage derivative matrix (d1 × d2).
    pub khat: Option<DMatrix<f64>>,
    pub cov: DMatrix<f64>,
    pub se: DVector<f64>,
    pub n_used: usize,
}

impl StageFit {
    pub fn d(&self) -> usize {
        self.beta.len()
    }

    pub fn wald_ci(&self, level: f64) -> Result<Vec<(f64, f64)>> {
        crate::estimator::wald_ci(
            self.beta.as_slice(),
            self.se.as_slice(),
            level,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(x1: Vec<f64>, a1: u8, x2: Vec<f64>, a2: Option<u8>, y: f64, r: Option<u8>) -> Trajectory {
        Trajectory { x1, a1, x2, a2, y, r }
    }

    fn five(v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        out.resize(5, 0.0);
        out
    }

    #[test]
    fn responder_row_has_zero_stage2_regressors() {
        let rows = vec![
            traj(five(&[0.1, -0.2]), 1, five(&[0.3, 0.4, 0.5]), None, 1.0, Some(0)),
            traj(five(&[0.1, -0.2]), 0, five(&[0.3, 0.4, 0.5]), Some(1), 1.0, Some(1)),
        ];
        let data = Dataset::from_rows(&rows).unwrap();
        let m = build_design_matrices(&data, &StageDesign::simulation_regular()).unwrap();
        assert_eq!(m.s.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0; 4]);
        assert_eq!(m.s.row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.3, 0.4, 0.5]);
    }

    #[test]
    fn zero_response_zeroes_s_even_when_a2_observed() {
        let rows = vec![traj(five(&[0.0]), 0, five(&[0.7, 0.1, 0.2]), Some(1), 0.0, Some(0))];
        let data = Dataset::from_rows(&rows).unwrap();
        let m = build_design_matrices(&data, &StageDesign::simulation_regular()).unwrap();
        assert!(m.s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn w_row_is_intercept_then_baseline() {
        let rows = vec![traj(five(&[0.1, -0.2, 0.9]), 1, five(&[]), Some(0), 0.0, Some(1))];
        let data = Dataset::from_rows(&rows).unwrap();
        let m = build_design_matrices(&data, &StageDesign::simulation_regular()).unwrap();
        assert_eq!(m.w.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.1, -0.2]);
        assert_eq!(m.s0.ncols(), 11);
        assert_eq!(m.w0.ncols(), 5);
    }

    #[test]
    fn rejects_non_binary_and_non_finite() {
        let bad = vec![traj(vec![0.0], 2, vec![0.0], None, 0.0, None)];
        assert!(Dataset::from_rows(&bad).is_err());
        let nan = vec![
            traj(vec![0.0], 0, vec![0.0], None, 0.0, None),
            traj(vec![f64::NAN], 0, vec![0.0], None, 0.0, None),
        ];
        match Dataset::from_rows(&nan) {
            Err(Error::NonFinite { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn stage1_map_cannot_use_stage2_information() {
        let rows = vec![traj(five(&[]), 0, five(&[]), Some(0), 0.0, Some(1))];
        let data = Dataset::from_rows(&rows).unwrap();
        let mut d = StageDesign::simulation_regular();
        d.stage1.push(Feature::X2(0));
        assert!(build_design_matrices(&data, &d).is_err());
    }

    #[test]
    fn feature_parsing() {
        let x1 = vec!["age".to_string(), "edu".to_string()];
        let x2 = vec!["pdd".to_string()];
        assert_eq!(Feature::parse("1", &x1, &x2).unwrap(), Feature::Intercept);
        assert_eq!(Feature::parse("x1:edu", &x1, &x2).unwrap(), Feature::X1(1));
        assert_eq!(Feature::parse("x2:1", &x1, &x2).unwrap(), Feature::X2(0));
        assert_eq!(Feature::parse("A1", &x1, &x2).unwrap(), Feature::A1);
        assert!(Feature::parse("x2:nope", &x1, &x2).is_err());
    }
}
