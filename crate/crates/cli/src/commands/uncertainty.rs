//! `adisep uncertainty`: export the per-pixel weight map `U` as an 8-bit PNG.

use std::fmt;
use std::path::Path;

use adisep_core::adis::DepthMap;
use adisep_core::pipeline::DemoPipeline;
use adisep_core::tensor::add;
use adisep_core::uncertainty::UncertaintyMap;
use anyhow::Result;
use serde::Serialize;

use crate::config::Config;
use crate::inputs::{pipeline_inputs, read_depth};

#[derive(Debug, Serialize)]
pub struct UncertaintyReport {
    pub input: String,
    pub output: String,
    pub height: usize,
    pub width: usize,
    pub zero_head: bool,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl fmt::Display for UncertaintyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "input: {} ({}x{})", self.input, self.width, self.height)?;
        writeln!(f, "head: {}", if self.zero_head { "zeroed" } else { "seeded" })?;
        writeln!(f, "U min {:.6}  max {:.6}  mean {:.6}", self.min, self.max, self.mean)?;
        write!(f, "written: {} (pixel = round(255 U))", self.output)
    }
}

/// `U` on the source grid of `depth`.
pub fn compute(cfg: &Config, depth: &DepthMap, image: Option<&Path>, zero_head: bool) -> Result<UncertaintyMap> {
    let (img, padded) = pipeline_inputs(cfg, depth, image)?;
    let mut pipeline = DemoPipeline::new(cfg.pipeline())?;
    if zero_head {
        pipeline.zero_uncertainty_head();
    }
    let f_id = add(&pipeline.image_encoder.forward(&img)?, &pipeline.encode_depth(&padded)?)?;
    let u = pipeline.fusion.u_head.compute(&f_id, cfg.padded_size())?;
    Ok(u.crop(depth.height(), depth.width())?)
}

pub fn run(cfg: &Config, depth_path: &Path, out: &Path, image: Option<&Path>, zero_head: bool) -> Result<UncertaintyReport> {
    let depth = read_depth(depth_path)?;
    let u = compute(cfg, &depth, image, zero_head)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out, u.to_png()?)?;
    let v = u.values();
    Ok(UncertaintyReport {
        input: depth_path.display().to_string(),
        output: out.display().to_string(),
        height: u.height(),
        width: u.width(),
        zero_head,
        min: v.iter().cloned().fold(f64::INFINITY, f64::min),
        max: v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mean: v.iter().sum::<f64>() / v.len() as f64,
    })
}
