use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::error::Result;

/// Statistical thresholds shared by every command, written into each summary.
pub const THRESHOLDS: &str = "mean checks: 4 standard errors; PSD dominance: \
lambda_min(bound - empirical) >= -1e-6 * trace(bound)";

/// Relative eigenvalue tolerance of the Monte Carlo dominance checks.
pub const DOMINANCE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Only gating checks decide the exit status; the rest are reported.
    pub gating: bool,
    pub statistic: f64,
    pub tolerance: f64,
    pub runtime_secs: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub command: String,
    pub scenario: String,
    pub seed: u64,
    pub trials: usize,
    pub thresholds: &'static str,
    pub checks: Vec<CheckResult>,
    pub artifacts: Vec<PathBuf>,
}

impl ExperimentReport {
    pub fn new(command: &str, scenario: &str, seed: u64, trials: usize) -> Self {
        ExperimentReport {
            command: command.to_owned(),
            scenario: scenario.to_owned(),
            seed,
            trials,
            thresholds: THRESHOLDS,
            checks: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.gating).all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn push(&mut self, check: CheckResult) {
        log::info!(
            "{} {}: {} (tolerance {}) {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.statistic,
            check.tolerance,
            check.detail
        );
        self.checks.push(check);
    }

    pub fn write_json(&mut self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("summary.json");
        self.artifacts.push(path.clone());
        let text = serde_json::to_string_pretty(self).map_err(|e| crate::Error::Parse(e.to_string()))?;
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }

    /// One line per check, for the terminal.
    pub fn render(&self) -> String {
        let mut out = format!("{} on {} (seed {}, {} trials)\n", self.command, self.scenario, self.seed, self.trials);
        for c in &self.checks {
            let tag = match (c.passed, c.gating) {
                (true, _) => "pass",
                (false, true) => "FAIL",
                (false, false) => "note",
            };
            out.push_str(&format!(
                "  [{tag}] {:<28} stat={:<12.6e} tol={:<10.3e} {:>7.2}s  {}\n",
                c.name, c.statistic, c.tolerance, c.runtime_secs, c.detail
            ));
        }
        out
    }
}

/// Times a check closure returning `(passed, statistic, detail)`.
pub fn timed(
    name: &str,
    tolerance: f64,
    gating: bool,
    f: impl FnOnce() -> Result<(bool, f64, String)>,
) -> Result<CheckResult> {
    let start = Instant::now();
    let (passed, statistic, detail) = f()?;
    Ok(CheckResult {
        name: name.to_owned(),
        passed,
        gating,
        statistic,
        tolerance,
        runtime_secs: start.elapsed().as_secs_f64(),
        detail,
    })
}
