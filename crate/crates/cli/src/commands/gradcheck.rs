//! `adisep gradcheck`: finite-difference verification of every backward pass.

use std::fmt;

use adisep_core::gradcheck::{self, CheckResult};
use anyhow::Result;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct GradcheckReport {
    pub seeds: Vec<u64>,
    pub corrupt: bool,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let first = self.seeds.first().copied().unwrap_or_default();
        writeln!(f, "seeds: {}..{} ({} runs){}", first, first + self.seeds.len() as u64, self.seeds.len(),
            if self.corrupt { ", corrupted gradients" } else { "" })?;
        writeln!(f, "{:<24} {:<10} {:>12} {:>8}  result", "check", "kind", "max_rel_err", "tol")?;
        for c in &self.checks {
            let kind = match c.kind {
                gradcheck::Kind::Elementary => "elementary",
                gradcheck::Kind::Composite => "composite",
            };
            writeln!(f, "{:<24} {:<10} {:>12.3e} {:>8.0e}  {}", c.name, kind, c.max_rel_error, c.tolerance,
                if c.passed { "PASS" } else { "FAIL" })?;
        }
        write!(f, "{}", if self.passed { "all checks passed" } else { "gradient check FAILED" })
    }
}

pub fn run(seed: u64, runs: usize, corrupt: bool) -> Result<GradcheckReport> {
    let seeds = gradcheck::seeds_from(seed, runs.max(1));
    let checks = gradcheck::run(&seeds, corrupt)?;
    let passed = checks.iter().all(|c| c.passed);
    Ok(GradcheckReport {
        seeds,
        corrupt,
        checks,
        passed,
    })
}
