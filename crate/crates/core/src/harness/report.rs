use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::fit::ExponentFit;
use crate::error::Result;

pub const REPORT_SCHEMA: u32 = 1;

/// How a check affects the verification outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    /// Exact identities; a failure fails the run.
    Hard,
    /// Regressions and stability checks; failures are warnings.
    Statistical,
    /// Evidence only, never pass/fail.
    Exploratory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

/// `value op threshold`, e.g. `slope_error <= 0.05`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub value: f64,
    pub op: Comparison,
    pub threshold: f64,
}

impl Criterion {
    pub fn holds(&self) -> bool {
        self.value.is_finite()
            && match self.op {
                Comparison::AtMost => self.value <= self.threshold,
                Comparison::AtLeast => self.value >= self.threshold,
            }
    }
}

/// One sample of a check: `ratio = quantity / bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub t: f64,
    pub quantity: f64,
    pub ratio: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema: u32,
    pub check_name: String,
    pub level: u32,
    pub gate: Gate,
    pub parameters: BTreeMap<String, Value>,
    /// Largest observed ratio (or the headline metric for non-ratio checks).
    pub sup_ratio: f64,
    pub fits: Vec<ExponentFit>,
    pub criteria: Vec<Criterion>,
    /// Samples violating a pointwise inequality.
    pub violations: usize,
    /// `None` for exploratory checks.
    pub pass: Option<bool>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<ReportRow>,
}

impl EstimateReport {
    pub fn new(check_name: impl Into<String>, level: u32, gate: Gate) -> Self {
        Self {
            schema: REPORT_SCHEMA,
            check_name: check_name.into(),
            level,
            gate,
            parameters: BTreeMap::new(),
            sup_ratio: 0.0,
            fits: Vec::new(),
            criteria: Vec::new(),
            violations: 0,
            pass: None,
            notes: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.set_param(key, value);
        self
    }

    pub fn set_param(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.parameters.insert(key.to_string(), v);
    }

    pub fn at_most(&mut self, name: &str, value: f64, threshold: f64) {
        self.push(name, value, Comparison::AtMost, threshold);
    }

    pub fn at_least(&mut self, name: &str, value: f64, threshold: f64) {
        self.push(name, value, Comparison::AtLeast, threshold);
    }

    fn push(&mut self, name: &str, value: f64, op: Comparison, threshold: f64) {
        self.criteria.push(Criterion {
            name: name.to_string(),
            value,
            op,
            threshold,
        });
    }

    pub fn criterion(&self, name: &str) -> Option<&Criterion> {
        self.criteria.iter().find(|c| c.name == name)
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    /// Derive `pass` from the criteria and violation count.
    pub fn recompute_pass(&mut self) {
        self.pass = match self.gate {
            Gate::Exploratory => None,
            _ => Some(self.violations == 0 && self.criteria.iter().all(Criterion::holds)),
        };
    }

    pub fn finish(mut self) -> Self {
        self.recompute_pass();
        self
    }

    pub fn passed(&self) -> bool {
        self.pass.unwrap_or(true)
    }

    pub fn failed_criteria(&self) -> Vec<&Criterion> {
        self.criteria.iter().filter(|c| !c.holds()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "quantity", "ratio", "bound"])?;
        for r in &self.rows {
            wr.write_record(&[fmt_f64(r.t), fmt_f64(r.quantity), fmt_f64(r.ratio), fmt_f64(r.bound)])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Writes `<check_name>.json` and `<check_name>.csv` into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(format!("{}.json", self.check_name)), self.to_json()?)?;
        let f = fs::File::create(dir.join(format!("{}.csv", self.check_name)))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn status(&self) -> &'static str {
        match (self.gate, self.pass) {
            (Gate::Exploratory, _) | (_, None) => "info",
            (_, Some(true)) => "pass",
            (Gate::Hard, Some(false)) => "FAIL",
            (Gate::Statistical, Some(false)) => "warn",
        }
    }
}

/// Shortest round-trip representation, so output is byte-stable.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}
