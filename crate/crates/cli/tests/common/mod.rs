//! Shared fixtures for the CLI tests and the fixture generator.

#![allow(dead_code)]

#[path = "../../../core/tests/support/ap_oracle.rs"]
pub mod ap_oracle;
#[path = "../../../core/tests/support/datasets.rs"]
pub mod datasets;
#[path = "../../../core/tests/support/monte_carlo.rs"]
pub mod monte_carlo;
pub mod scene;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn adisep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adisep"))
        .args(args)
        .env_remove("ADISEP_THREADS")
        .output()
        .expect("spawn adisep")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}):\n{}\nstderr:\n{}",
            stdout(out),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}
