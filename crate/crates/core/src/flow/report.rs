//! Experiment reports whose verdicts can be recomputed from stored numbers.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;

/// An f64 that survives JSON even when it is NaN or infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str(&self.0.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Num, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            F(f64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::F(x) => Ok(Num(x)),
            Raw::S(s) => s.parse::<f64>().map(Num).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "kebab-case")]
pub enum Check {
    /// |measured − expected| ≤ tol·|expected|
    RelativeClose { measured: Num, expected: Num, tol: Num },
    AtMost { value: Num, bound: Num },
    AtLeast { value: Num, bound: Num },
    Flag { value: bool, expected: bool },
}

impl Check {
    pub fn relative(measured: f64, expected: f64, tol: f64) -> Check {
        Check::RelativeClose { measured: Num(measured), expected: Num(expected), tol: Num(tol) }
    }

    pub fn at_most(value: f64, bound: f64) -> Check {
        Check::AtMost { value: Num(value), bound: Num(bound) }
    }

    pub fn at_least(value: f64, bound: f64) -> Check {
        Check::AtLeast { value: Num(value), bound: Num(bound) }
    }

    pub fn flag(value: bool, expected: bool) -> Check {
        Check::Flag { value, expected }
    }

    /// NaN anywhere fails.
    pub fn holds(&self) -> bool {
        match self {
            Check::RelativeClose { measured, expected, tol } => {
                (measured.0 - expected.0).abs() <= tol.0 * expected.0.abs()
            }
            Check::AtMost { value, bound } => value.0 <= bound.0,
            Check::AtLeast { value, bound } => value.0 >= bound.0,
            Check::Flag { value, expected } => value == expected,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    #[serde(flatten)]
    pub check: Check,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: String,
    pub inputs: BTreeMap<String, serde_json::Value>,
    pub predicted: BTreeMap<String, Num>,
    pub measured: BTreeMap<String, Num>,
    pub notes: Vec<String>,
    pub criteria: Vec<Criterion>,
    /// Wall-clock measurements; kept out of serialized reports so they stay byte-stable.
    #[serde(skip)]
    pub timings: BTreeMap<String, f64>,
}

impl ExperimentReport {
    pub fn new(kind: &str) -> ExperimentReport {
        ExperimentReport { kind: kind.into(), ..Default::default() }
    }

    pub fn input<T: Serialize>(&mut self, key: &str, value: T) -> &mut Self {
        self.inputs.insert(key.into(), serde_json::to_value(value).expect("input serializes"));
        self
    }

    pub fn predict(&mut self, key: &str, value: f64) -> &mut Self {
        self.predicted.insert(key.into(), Num(value));
        self
    }

    pub fn measure(&mut self, key: &str, value: f64) -> &mut Self {
        self.measured.insert(key.into(), Num(value));
        self
    }

    pub fn timing(&mut self, key: &str, seconds: f64) -> &mut Self {
        self.timings.insert(key.into(), seconds);
        self
    }

    pub fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.notes.push(text.into());
        self
    }

    pub fn criterion(&mut self, name: &str, check: Check) -> &mut Self {
        let passed = check.holds();
        self.criteria.push(Criterion { name: name.into(), check, passed });
        self
    }

    pub fn predicted(&self, key: &str) -> Option<f64> {
        self.predicted.get(key).map(|n| n.0)
    }

    pub fn measured(&self, key: &str) -> Option<f64> {
        self.measured.get(key).map(|n| n.0)
    }

    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.criteria.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Criterion> {
        self.criteria.iter().find(|c| c.name == name)
    }

    /// Replaces the tolerance (or bound) of a criterion and recomputes its verdict.
    /// Flags have no tolerance and are rejected.
    pub fn retune(&mut self, name: &str, value: f64) -> Option<()> {
        let c = self.criteria.iter_mut().find(|c| c.name == name)?;
        match &mut c.check {
            Check::RelativeClose { tol, .. } => *tol = Num(value),
            Check::AtMost { bound, .. } | Check::AtLeast { bound, .. } => *bound = Num(value),
            Check::Flag { .. } => return None,
        }
        c.passed = c.check.holds();
        Some(())
    }

    /// Whether every stored verdict equals the one recomputed from its numbers.
    pub fn recheck(&self) -> bool {
        self.criteria.iter().all(|c| c.check.holds() == c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<ExperimentReport> {
        serde_json::from_str(text)
    }
}
