pub mod eval;
pub mod export;
pub mod gradcheck;
pub mod separate;
pub mod sweep;
pub mod uncertainty;

use std::fmt;

use serde::Serialize;

/// Outcome of a command that ran to completion.
pub struct Outcome {
    pub text: String,
    pub json: serde_json::Value,
    /// False when a verification step failed (exit code 1).
    pub verified: bool,
}

impl Outcome {
    pub fn new<R: Serialize + fmt::Display>(report: &R) -> anyhow::Result<Self> {
        Ok(Self {
            text: report.to_string(),
            json: serde_json::to_value(report)?,
            verified: true,
        })
    }
}
