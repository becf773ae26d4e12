//! `adisep separate`: split a depth map into per-interval sub-depth PNGs.

use std::fmt;
use std::path::{Path, PathBuf};

use adisep_core::adis::{separate, soft_separate, DepthMap, IntervalPartition, SubDepthStack};
use adisep_core::pipeline::{DemoPipeline, PipelineOutput};
use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::Config;
use crate::inputs::{pipeline_inputs, read_depth};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundsSource {
    Head,
    Uniform,
}

/// Bounds for one frame plus the pipeline run that produced (or used) them.
pub struct Separation {
    pub partition: IntervalPartition,
    pub source: BoundsSource,
    pub output: PipelineOutput,
    /// Stack on the original (unpadded) grid.
    pub stack: SubDepthStack,
}

/// Runs the demo pipeline on the padded frame; the returned stack is cut
/// from the unpadded depth with the same bounds.
pub fn separate_frame(cfg: &Config, depth: &DepthMap, image: Option<&Path>, uniform: bool) -> Result<Separation> {
    let (img, padded) = pipeline_inputs(cfg, depth, image)?;
    let pipeline = DemoPipeline::new(cfg.pipeline())?;
    let (source, fixed) = if uniform {
        (BoundsSource::Uniform, Some(IntervalPartition::uniform(cfg.n_d, cfg.d_max)?))
    } else {
        (BoundsSource::Head, None)
    };
    let output = pipeline.forward(&img, &padded, fixed.as_ref())?;
    let partition = output.partition.clone();
    let stack = separate(depth, &partition);
    stack.check_invariants()?;
    Ok(Separation {
        partition,
        source,
        output,
        stack,
    })
}

#[derive(Debug, Serialize)]
pub struct SeparateReport {
    pub input: String,
    pub height: usize,
    pub width: usize,
    pub valid_pixels: usize,
    pub n_d: usize,
    pub d_max: f64,
    pub bounds_source: BoundsSource,
    pub bounds: Vec<f64>,
    pub counts: Vec<usize>,
    pub tau: f64,
    /// Per-interval sum of soft membership weights at temperature `tau`.
    pub soft_mass: Vec<f64>,
    pub layers: Vec<String>,
    pub overview: String,
}

impl fmt::Display for SeparateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "input: {} ({}x{}, {} valid pixels)", self.input, self.width, self.height, self.valid_pixels)?;
        let src = match self.bounds_source {
            BoundsSource::Head => "bound head",
            BoundsSource::Uniform => "uniform",
        };
        writeln!(f, "intervals: {} over [0, {}] m, bounds from {src}", self.n_d, self.d_max)?;
        writeln!(f, "{:>8}  {:>10}  {:>10}  {:>10}  {:>12}  file", "interval", "lower_m", "upper_m", "pixels", "soft_mass")?;
        for i in 0..self.n_d {
            writeln!(
                f,
                "{:>8}  {:>10.4}  {:>10.4}  {:>10}  {:>12.2}  {}",
                i + 1,
                self.bounds[i],
                self.bounds[i + 1],
                self.counts[i],
                self.soft_mass[i],
                self.layers[i]
            )?;
        }
        writeln!(f, "{:>8}  {:>10}  {:>10}  {:>10}", "total", "", "", self.counts.iter().sum::<usize>())?;
        writeln!(f, "soft membership temperature: {} m", self.tau)?;
        write!(f, "overview: {}", self.overview)
    }
}

pub const OVERVIEW_FILE: &str = "layers.png";
pub const REPORT_FILE: &str = "report.json";

pub fn run(cfg: &Config, depth_path: &Path, out: &Path, image: Option<&Path>, uniform: bool) -> Result<SeparateReport> {
    let depth = read_depth(depth_path)?;
    let sep = separate_frame(cfg, &depth, image, uniform)?;
    let paths: Vec<PathBuf> = sep
        .stack
        .write_pngs(out)
        .with_context(|| format!("writing sub-depth maps to {}", out.display()))?;
    let overview = out.join(OVERVIEW_FILE);
    std::fs::write(&overview, sep.stack.layer_overview_png()?)?;
    let soft = soft_separate(&depth, &sep.partition, cfg.tau)?;
    let plane = depth.height() * depth.width();
    let soft_mass = soft.weights.as_slice().chunks(plane).map(|c| c.iter().sum()).collect();
    let name = |p: &Path| p.file_name().unwrap_or_default().to_string_lossy().into_owned();
    let report = SeparateReport {
        input: depth_path.display().to_string(),
        height: depth.height(),
        width: depth.width(),
        valid_pixels: depth.valid_count(),
        n_d: cfg.n_d,
        d_max: cfg.d_max,
        bounds_source: sep.source,
        bounds: sep.partition.bounds().to_vec(),
        counts: sep.stack.occupancy(),
        tau: cfg.tau,
        soft_mass,
        layers: paths.iter().map(|p| name(p)).collect(),
        overview: name(&overview),
    };
    std::fs::write(out.join(REPORT_FILE), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}
