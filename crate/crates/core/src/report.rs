//! Structured records for inequality and identity checks.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

/// One measured constant with the interval it must fall in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub id: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Measurement {
    pub fn within(&self) -> bool {
        self.value.is_finite() && self.value >= self.lo && self.value <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        })
    }
}

/// Outcome of one verification check.
///
/// The verdict is derived: it is `Pass` iff every measurement lies inside
/// its own interval (an empty measurement list passes).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub name: String,
    pub parameters: BTreeMap<String, f64>,
    pub measured: Vec<Measurement>,
    /// Human-readable description of the bound being tested.
    pub bound: String,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn new(name: impl Into<String>, bound: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            parameters: BTreeMap::new(),
            measured: Vec::new(),
            bound: bound.into(),
            verdict: Verdict::Pass,
            notes: Vec::new(),
        }
    }

    pub fn param(mut self, key: &str, value: f64) -> Self {
        self.parameters.insert(key.to_string(), value);
        self
    }

    pub fn set_param(&mut self, key: &str, value: f64) {
        self.parameters.insert(key.to_string(), value);
    }

    pub fn measure(&mut self, id: impl Into<String>, value: f64, lo: f64, hi: f64) {
        self.measured.push(Measurement {
            id: id.into(),
            value,
            lo,
            hi,
        });
        self.refresh();
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    fn refresh(&mut self) {
        self.verdict = if self.measured.iter().all(Measurement::within) {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Measurements outside their interval.
    pub fn failures(&self) -> impl Iterator<Item = &Measurement> {
        self.measured.iter().filter(|m| !m.within())
    }

    /// Largest measured value with the given id prefix.
    pub fn max_of(&self, prefix: &str) -> Option<f64> {
        self.measured
            .iter()
            .filter(|m| m.id.starts_with(prefix))
            .map(|m| m.value)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }
}
