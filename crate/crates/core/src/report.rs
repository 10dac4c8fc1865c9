//! Run reports: every check performed during a run is recorded exactly once
//! with its outcome and, where meaningful, its exact margin. Text rendering
//! includes timings for the console; JSON serialization omits them so two
//! identical runs produce identical artifacts.

use serde::Serialize;
use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{GeomError, Result};
use crate::num::{rat_to_string, Rat};

/// One named check with its outcome.
#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    /// Exact margin as a rational string, when the check has one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<String>,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

/// The checks of one pipeline stage. Wall-clock seconds are kept for the
/// console rendering only and never serialized.
#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub assertions: Vec<Assertion>,
    #[serde(skip)]
    pub seconds: f64,
}

impl StageReport {
    pub fn new(stage: impl Into<String>) -> Self {
        StageReport {
            stage: stage.into(),
            assertions: Vec::new(),
            seconds: 0.0,
        }
    }

    pub fn check(&mut self, name: impl Into<String>, pass: bool) {
        self.assertions.push(Assertion {
            name: name.into(),
            pass,
            margin: None,
            detail: String::new(),
        });
    }

    pub fn check_margin(&mut self, name: impl Into<String>, pass: bool, margin: &Rat) {
        self.assertions.push(Assertion {
            name: name.into(),
            pass,
            margin: Some(rat_to_string(margin)),
            detail: String::new(),
        });
    }

    pub fn check_detail(
        &mut self,
        name: impl Into<String>,
        pass: bool,
        detail: impl Into<String>,
    ) {
        self.assertions.push(Assertion {
            name: name.into(),
            pass,
            margin: None,
            detail: detail.into(),
        });
    }

    pub fn all_pass(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }
}

/// Full record of one run: configuration identity, seed, and per-stage
/// checks. Serializes without timings.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub label: String,
    pub seed: u64,
    pub stages: Vec<StageReport>,
}

impl Report {
    pub fn new(label: impl Into<String>, seed: u64) -> Self {
        Report {
            label: label.into(),
            seed,
            stages: Vec::new(),
        }
    }

    pub fn push(&mut self, stage: StageReport) {
        self.stages.push(stage);
    }

    pub fn all_pass(&self) -> bool {
        self.stages.iter().all(|s| s.all_pass())
    }

    pub fn assertion_count(&self) -> usize {
        self.stages.iter().map(|s| s.assertions.len()).sum()
    }

    /// Every assertion must appear exactly once. Duplicated names would make
    /// the record ambiguous, so they are rejected before writing artifacts.
    pub fn validate_unique(&self) -> Result<()> {
        let mut seen: HashSet<(&str, &str)> = HashSet::new();
        for s in &self.stages {
            for a in &s.assertions {
                if !seen.insert((s.stage.as_str(), a.name.as_str())) {
                    return Err(GeomError::Config(format!(
                        "assertion {:?} recorded twice in stage {:?}",
                        a.name, s.stage
                    )));
                }
            }
        }
        Ok(())
    }

    /// Stable JSON form without timings.
    pub fn to_json_string(&self) -> Result<String> {
        self.validate_unique()?;
        serde_json::to_string_pretty(self)
            .map_err(|e| GeomError::Config(format!("report serialization: {e}")))
    }

    /// Console rendering with timings and one line per assertion.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "run {} (seed {})", self.label, self.seed);
        for s in &self.stages {
            let _ = writeln!(out, "[{}] {:.2}s", s.stage, s.seconds);
            for a in &s.assertions {
                let mark = if a.pass { "ok " } else { "FAIL" };
                let mut line = format!("  {mark} {}", a.name);
                if let Some(m) = &a.margin {
                    let _ = write!(line, "  margin {m}");
                }
                if !a.detail.is_empty() {
                    let _ = write!(line, "  ({})", a.detail);
                }
                let _ = writeln!(out, "{line}");
            }
        }
        let verdict = if self.all_pass() { "PASS" } else { "FAIL" };
        let _ = writeln!(
            out,
            "{} assertions, overall {verdict}",
            self.assertion_count()
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::rat;

    #[test]
    fn json_omits_timings_and_text_includes_them() {
        let mut r = Report::new("demo", 7);
        let mut s = StageReport::new("generate");
        s.check("separated", true);
        s.check_margin("covering", true, &rat(9, 4));
        s.seconds = 1.25;
        r.push(s);
        let js = r.to_json_string().expect("json");
        assert!(!js.contains("seconds"));
        assert!(js.contains("\"9/4\""));
        let txt = r.render_text();
        assert!(txt.contains("1.25s"));
        assert!(txt.contains("PASS"));
    }

    #[test]
    fn duplicate_assertion_rejected() {
        let mut r = Report::new("demo", 7);
        let mut s = StageReport::new("thin");
        s.check("kept", true);
        s.check("kept", false);
        r.push(s);
        assert!(r.to_json_string().is_err());
    }

    #[test]
    fn identical_reports_serialize_identically() {
        let build = || {
            let mut r = Report::new("ref", 3);
            let mut s = StageReport::new("dualize");
            s.check_margin("volume identity", true, &rat(400, 1));
            s.seconds = 0.5;
            r.push(s);
            r
        };
        let mut a = build();
        let b = build();
        a.stages[0].seconds = 99.0;
        assert_eq!(
            a.to_json_string().expect("a"),
            b.to_json_string().expect("b")
        );
    }
}
