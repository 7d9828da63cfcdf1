//! CSV ingestion of user data under an INI column schema.
//!
//! ```ini
//! [columns]
//! x1 = age, baseline_score
//! a1 = trt1
//! x2 = week8_score
//! a2 = trt2
//! y = outcome
//! r = responder
//!
//! [design]
//! stage2 = 1, x2:week8_score
//! stage1 = 1, x1:age
//! scale_by_r = true
//! ```
//!
//! Without `[design]`, S is an intercept plus every stage-2 covariate, W an
//! intercept plus every baseline covariate, and S is scaled by `r` when an
//! `r` column is mapped. Blank `a2` and `r` cells are missing.

use std::fs;
use std::path::Path;

use ini::Ini;

use crate::data::{Dataset, Feature, StageDesign, Trajectory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub x1: Vec<String>,
    pub a1: String,
    pub x2: Vec<String>,
    pub a2: String,
    pub y: String,
    pub r: Option<String>,
    /// Feature tokens as accepted by [`Feature::parse`]; `None` uses the defaults.
    pub stage2: Option<Vec<String>>,
    pub stage1: Option<Vec<String>>,
    pub scale_by_r: Option<bool>,
}

fn list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect()
}

impl Schema {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read schema {}: {e}", path.display())))?;
        Self::from_ini_str(&text)
    }

    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str_noescape(text).map_err(|e| Error::Config(e.to_string()))?;
        for name in ini.sections().flatten() {
            if name != "columns" && name != "design" {
                return Err(Error::Config(format!("unknown schema section [{name}]")));
            }
        }
        let cols = ini.section(Some("columns")).ok_or_else(|| Error::Config("schema needs a [columns] section".into()))?;
        let one = |key: &str| -> Result<String> {
            cols.get(key)
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .ok_or_else(|| Error::Config(format!("[columns] needs '{key}'")))
        };
        let design = ini.section(Some("design"));
        let scale_by_r = match design.and_then(|d| d.get("scale_by_r")).map(str::trim) {
            None => None,
            Some("true") | Some("1") | Some("yes") => Some(true),
            Some("false") | Some("0") | Some("no") => Some(false),
            Some(v) => return Err(Error::Config(format!("scale_by_r must be true or false, got '{v}'"))),
        };
        let schema = Schema {
            x1: list(cols.get("x1").unwrap_or("")),
            a1: one("a1")?,
            x2: list(cols.get("x2").unwrap_or("")),
            a2: one("a2")?,
            y: one("y")?,
            r: cols.get("r").map(|v| v.trim().to_string()).filter(|v| !v.is_empty()),
            stage2: design.and_then(|d| d.get("stage2")).map(list),
            stage1: design.and_then(|d| d.get("stage1")).map(list),
            scale_by_r,
        };
        if schema.x1.is_empty() || schema.x2.is_empty() {
            return Err(Error::Config("[columns] needs at least one x1 and one x2 column".into()));
        }
        Ok(schema)
    }

    /// The schema [`write_csv`] emits for `data`.
    pub fn for_dataset(data: &Dataset) -> Self {
        Schema {
            x1: data.x1_names().to_vec(),
            a1: "a1".into(),
            x2: data.x2_names().to_vec(),
            a2: "a2".into(),
            y: "y".into(),
            r: data.r().iter().any(Option::is_some).then(|| "r".into()),
            stage2: None,
            stage1: None,
            scale_by_r: None,
        }
    }

    /// Stage feature maps for `data`, resolved against its column names.
    pub fn design(&self, data: &Dataset) -> Result<StageDesign> {
        let parse = |tokens: &[String]| -> Result<Vec<Feature>> {
            tokens.iter().map(|t| Feature::parse(t, data.x1_names(), data.x2_names())).collect()
        };
        let stage2 = match &self.stage2 {
            Some(t) => parse(t)?,
            None => std::iter::once(Feature::Intercept).chain((0..data.p2()).map(Feature::X2)).collect(),
        };
        let stage1 = match &self.stage1 {
            Some(t) => parse(t)?,
            None => std::iter::once(Feature::Intercept).chain((0..data.p1()).map(Feature::X1)).collect(),
        };
        let scale = self.scale_by_r.unwrap_or(self.r.is_some());
        if scale && self.r.is_none() {
            return Err(Error::Config("scale_by_r needs an r column".into()));
        }
        let design = StageDesign::new(stage2, scale, stage1, data.p1(), data.p2());
        design.validate(data)?;
        Ok(design)
    }
}

fn binary(cell: &str, line: u64, column: &str) -> Result<u8> {
    match cell.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::Csv { line, msg: format!("column '{column}' must be 0 or 1, got '{other}'") }),
    }
}

fn optional_binary(cell: &str, line: u64, column: &str) -> Result<Option<u8>> {
    if cell.trim().is_empty() {
        Ok(None)
    } else {
        binary(cell, line, column).map(Some)
    }
}

fn number(cell: &str, line: u64, column: &str) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| Error::Csv { line, msg: format!("column '{column}' is not numeric: '{cell}'") })?;
    if !v.is_finite() {
        return Err(Error::Csv { line, msg: format!("column '{column}' is not finite: '{cell}'") });
    }
    Ok(v)
}

/// Read a headed CSV file into a [`Dataset`] named after the schema columns.
pub fn ingest_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read data {}: {e}", path.display())))?;
    ingest_str(&text, schema)
}

/// [`ingest_csv`] on in-memory text.
pub fn ingest_str(text: &str, schema: &Schema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let width = header.len();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Csv { line: 1, msg: format!("missing mapped column '{name}'") })
    };
    let x1: Vec<usize> = schema.x1.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let x2: Vec<usize> = schema.x2.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let (a1, a2, y) = (col(&schema.a1)?, col(&schema.a2)?, col(&schema.y)?);
    let r = schema.r.as_deref().map(col).transpose()?;

    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::Csv { line, msg: format!("expected {width} fields, found {}", rec.len()) });
        }
        rows.push(Trajectory {
            x1: x1.iter().zip(&schema.x1).map(|(&j, c)| number(&rec[j], line, c)).collect::<Result<_>>()?,
            a1: binary(&rec[a1], line, &schema.a1)?,
            x2: x2.iter().zip(&schema.x2).map(|(&j, c)| number(&rec[j], line, c)).collect::<Result<_>>()?,
            a2: optional_binary(&rec[a2], line, &schema.a2)?,
            y: number(&rec[y], line, &schema.y)?,
            r: match (r, &schema.r) {
                (Some(j), Some(c)) => optional_binary(&rec[j], line, c)?,
                _ => None,
            },
        });
    }
    if rows.is_empty() {
        return Err(Error::Csv { line: 2, msg: "no data rows".into() });
    }
    Dataset::from_rows(&rows)?.with_names(schema.x1.clone(), schema.x2.clone())
}

/// CSV text matching [`Schema::for_dataset`]. Floats use shortest round-trip
/// formatting, so ingesting the output reproduces `data` exactly.
pub fn dataset_to_csv(data: &Dataset) -> Result<String> {
    let schema = Schema::for_dataset(data);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = schema.x1.clone();
    header.push(schema.a1.clone());
    header.extend(schema.x2.iter().cloned());
    header.extend([schema.a2.clone(), schema.y.clone()]);
    header.extend(schema.r.clone());
    w.write_record(&header)?;
    let opt = |v: Option<u8>| v.map(|b| b.to_string()).unwrap_or_default();
    for t in data.rows() {
        let mut rec: Vec<String> = t.x1.iter().map(f64::to_string).collect();
        rec.push(t.a1.to_string());
        rec.extend(t.x2.iter().map(f64::to_string));
        rec.push(opt(t.a2));
        rec.push(t.y.to_string());
        if schema.r.is_some() {
            rec.push(opt(t.r));
        }
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_csv(data)?)?;
    Ok(())
}
