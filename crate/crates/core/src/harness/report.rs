//! Machine-readable experiment reports.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZrpError};
use crate::oracle::Check;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// not enough data to judge; does not count as a failure
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<(f64, f64)>,
}

impl Estimate {
    pub fn point(name: impl Into<String>, value: f64) -> Self {
        Self { name: name.into(), value, se: None, ci: None }
    }

    /// Normal 95% interval from a standard error.
    pub fn with_se(name: impl Into<String>, value: f64, se: f64) -> Self {
        Self { name: name.into(), value, se: Some(se), ci: Some((value - Z95 * se, value + Z95 * se)) }
    }

    pub fn with_ci(name: impl Into<String>, value: f64, ci: (f64, f64)) -> Self {
        Self { name: name.into(), value, se: None, ci: Some(ci) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
}

impl TestResult {
    pub fn new(name: impl Into<String>, statistic: f64, p_value: f64) -> Self {
        Self { name: name.into(), statistic, p_value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub experiment: String,
    pub label: String,
    pub seed: u64,
    pub status: Status,
    pub estimates: Vec<Estimate>,
    pub tests: Vec<TestResult>,
    /// gated
    pub checks: Vec<Check>,
    /// reported, not gated
    pub diagnostics: Vec<Check>,
    pub notes: Vec<String>,
    /// file names relative to the experiment directory
    pub artifacts: Vec<String>,
}

impl StatReport {
    pub fn new(experiment: &str, label: &str, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            label: label.into(),
            seed,
            status: Status::Inconclusive,
            estimates: Vec::new(),
            tests: Vec::new(),
            checks: Vec::new(),
            diagnostics: Vec::new(),
            notes: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn estimate(&mut self, e: Estimate) {
        self.estimates.push(e);
    }

    pub fn test(&mut self, t: TestResult) {
        self.tests.push(t);
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn diagnostic(&mut self, c: Check) {
        self.diagnostics.push(c);
    }

    pub fn note(&mut self, n: impl Into<String>) {
        self.notes.push(n.into());
    }

    /// Set the status from the checks. `conclusive = false` turns a would-be
    /// pass or fail into `Inconclusive`.
    pub fn finish(mut self, conclusive: bool) -> Self {
        self.status = if !conclusive {
            Status::Inconclusive
        } else if self.checks.iter().all(|c| c.passed) {
            Status::Pass
        } else {
            Status::Fail
        };
        self
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn find_check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn find_estimate(&self, name: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.name == name)
    }

    /// p-values in `[0, 1]`, intervals containing their estimates, no NaN values.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(ZrpError::InvalidParameter(format!("report {}: {what}", self.label)));
        for t in &self.tests {
            if !(0.0..=1.0).contains(&t.p_value) {
                return bad(format!("p-value {} of {} outside [0, 1]", t.p_value, t.name));
            }
        }
        for e in &self.estimates {
            if e.value.is_nan() {
                return bad(format!("estimate {} is NaN", e.name));
            }
            if let Some((lo, hi)) = e.ci {
                if !(lo <= e.value && e.value <= hi) {
                    return bad(format!("interval [{lo}, {hi}] of {} misses {}", e.name, e.value));
                }
            }
        }
        for c in self.checks.iter().chain(&self.diagnostics) {
            if c.value.is_nan() {
                return bad(format!("check {} is NaN", c.name));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{chi2_gof, sign_test, wilson_interval};
    use proptest::prelude::*;

    #[test]
    fn status_from_checks() {
        let mut r = StatReport::new("x", "x", 0);
        r.check(Check::at_most("a", 1.0, 2.0));
        assert_eq!(r.clone().finish(true).status, Status::Pass);
        assert_eq!(r.clone().finish(false).status, Status::Inconclusive);
        r.check(Check::above("b", 1.0, 2.0));
        let r = r.finish(true);
        assert!(r.failed());
        assert_eq!(r.failures().count(), 1);
    }

    #[test]
    fn validate_rejects_bad_values() {
        let mut r = StatReport::new("x", "x", 0);
        r.test(TestResult::new("t", 1.0, 1.5));
        assert!(r.validate().is_err());
        let mut r = StatReport::new("x", "x", 0);
        r.estimate(Estimate::with_ci("e", 2.0, (0.0, 1.0)));
        assert!(r.validate().is_err());
    }

    proptest! {
        #[test]
        fn constructed_reports_validate(
            mean in -1e3f64..1e3,
            se in 0.0f64..1e2,
            succ in 0u64..500,
            extra in 0u64..500,
            counts in prop::collection::vec(0u64..200, 2..12),
            pos in 0u64..300,
            neg in 0u64..300,
        ) {
            let mut r = StatReport::new("p", "p", 1);
            r.estimate(Estimate::with_se("mean", mean, se));
            let n = succ + extra;
            let p_hat = if n > 0 { succ as f64 / n as f64 } else { 0.0 };
            r.estimate(Estimate::with_ci("share", p_hat, wilson_interval(succ, n, Z95)));
            let probs = vec![1.0 / counts.len() as f64; counts.len()];
            let c = chi2_gof(&counts, &probs, 5.0);
            r.test(TestResult::new("chi2", c.statistic, c.p_value));
            r.test(TestResult::new("sign", (pos as f64) - (neg as f64), sign_test(pos, neg)));
            prop_assert!(r.validate().is_ok(), "{:?}", r);
        }
    }
}
