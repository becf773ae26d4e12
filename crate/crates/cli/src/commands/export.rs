//! `adisep export-cloud`: back-project a depth map to an ASCII PLY cloud.

use std::fmt;
use std::path::Path;

use adisep_core::pseudolidar::{backproject, backproject_stack, write_ply};
use anyhow::Result;
use serde::Serialize;

use crate::commands::separate::{separate_frame, BoundsSource};
use crate::config::Config;
use crate::inputs::{read_calib, read_depth};

#[derive(Debug, Serialize)]
pub struct ExportReport {
    pub input: String,
    pub output: String,
    pub points: usize,
    /// Points per interval when the cloud is tagged.
    pub per_interval: Option<Vec<usize>>,
    pub bounds_source: Option<BoundsSource>,
}

impl fmt::Display for ExportReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "input: {}", self.input)?;
        if let Some(counts) = &self.per_interval {
            let list: Vec<String> = counts.iter().map(|c| c.to_string()).collect();
            writeln!(f, "points per interval: {}", list.join(" "))?;
        }
        write!(f, "written: {} ({} points)", self.output, self.points)
    }
}

pub fn run(
    cfg: &Config,
    depth_path: &Path,
    calib_path: &Path,
    out: &Path,
    separated: bool,
    uniform: bool,
    image: Option<&Path>,
) -> Result<ExportReport> {
    let depth = read_depth(depth_path)?;
    let calib = read_calib(calib_path)?;
    let (cloud, per_interval, source) = if separated {
        let sep = separate_frame(cfg, &depth, image, uniform)?;
        let counts = sep.stack.occupancy();
        (backproject_stack(&sep.stack, &calib)?, Some(counts), Some(sep.source))
    } else {
        (backproject(&depth, &calib)?, None, None)
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out, write_ply(&cloud))?;
    Ok(ExportReport {
        input: depth_path.display().to_string(),
        output: out.display().to_string(),
        points: cloud.len(),
        per_interval,
        bounds_source: source,
    })
}
