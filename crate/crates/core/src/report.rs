//! Pass/fail rows produced by the property suites.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub observed: f64,
    pub expected: f64,
    /// Signed amount by which the check missed; nonpositive when passed.
    pub violation: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub suite: String,
    pub checks: Vec<CheckRow>,
}

impl Report {
    pub fn new(suite: impl Into<String>) -> Self {
        Report {
            suite: suite.into(),
            checks: Vec::new(),
        }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// `|observed - expected| <= tolerance`.
    pub fn approx(&mut self, name: impl Into<String>, observed: f64, expected: f64, tolerance: f64) -> &mut CheckRow {
        let violation = (observed - expected).abs() - tolerance;
        self.push(name, observed, expected, violation, tolerance)
    }

    /// `observed <= bound + slack`.
    pub fn at_most(&mut self, name: impl Into<String>, observed: f64, bound: f64, slack: f64) -> &mut CheckRow {
        let violation = observed - bound - slack;
        self.push(name, observed, bound, violation, slack)
    }

    /// Exact equality; NaN never passes.
    pub fn exact(&mut self, name: impl Into<String>, observed: f64, expected: f64) -> &mut CheckRow {
        let violation = if observed == expected { 0.0 } else { (observed - expected).abs().max(f64::MIN_POSITIVE) };
        let passed = observed == expected;
        let row = self.push(name, observed, expected, violation, 0.0);
        row.passed = passed;
        row
    }

    pub fn flag(&mut self, name: impl Into<String>, passed: bool, note: impl Into<String>) -> &mut CheckRow {
        let row = self.push(name, passed as u8 as f64, 1.0, if passed { 0.0 } else { 1.0 }, 0.0);
        row.passed = passed;
        row.note = Some(note.into());
        row
    }

    pub fn extend(&mut self, other: Report) {
        let prefix = other.suite;
        for mut c in other.checks {
            c.name = format!("{prefix}/{}", c.name);
            self.checks.push(c);
        }
    }

    fn push(&mut self, name: impl Into<String>, observed: f64, expected: f64, violation: f64, tolerance: f64) -> &mut CheckRow {
        self.checks.push(CheckRow {
            name: name.into(),
            observed,
            expected,
            violation,
            tolerance,
            passed: violation <= 0.0,
            note: None,
        });
        self.checks.last_mut().expect("just pushed")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_record_outcomes() {
        let mut r = Report::new("demo");
        r.approx("close", 1.0005, 1.0, 1e-3);
        r.at_most("bound", 2.0, 1.0, 0.5);
        r.exact("nan", f64::NAN, 0.0);
        assert!(r.checks[0].passed);
        assert!(!r.checks[1].passed && (r.checks[1].violation - 0.5).abs() < 1e-15);
        assert!(!r.checks[2].passed);
        assert_eq!(r.failures().count(), 2);
    }
}
