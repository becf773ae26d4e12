//! Run configuration: one JSON file, overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use adisep_core::eval::{default_iou_threshold, Difficulty};
use adisep_core::pipeline::PipelineConfig;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Number of depth intervals.
    pub n_d: usize,
    /// Depth range in metres covered by the intervals.
    pub d_max: f64,
    /// Soft-separation temperature in metres.
    pub tau: f64,
    /// Evaluation IoU threshold per class.
    pub iou_thresholds: BTreeMap<String, f64>,
    pub classes: Vec<String>,
    pub difficulties: Vec<Difficulty>,
    /// Input padding target as `[width, height]`.
    pub padding: [usize; 2],
    pub seed: u64,
    /// Feature width of the demo encoders.
    pub channels: usize,
    /// Feature stride of the demo encoders.
    pub stride: usize,
}

impl Default for Config {
    fn default() -> Self {
        let classes: Vec<String> = ["Car", "Pedestrian", "Cyclist"].map(String::from).to_vec();
        let iou_thresholds = classes
            .iter()
            .map(|c| (c.clone(), default_iou_threshold(c).0))
            .collect();
        Self {
            n_d: 8,
            d_max: 80.0,
            tau: 0.5,
            iou_thresholds,
            classes,
            difficulties: Difficulty::ALL.to_vec(),
            padding: [1760, 512],
            seed: 0,
            channels: 4,
            stride: 2,
        }
    }
}

/// Flag values that replace config entries when present.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub n_d: Option<usize>,
    pub d_max: Option<f64>,
    pub tau: Option<f64>,
    pub seed: Option<u64>,
}

impl Config {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Config::default(),
        };
        if let Some(v) = overrides.n_d {
            cfg.n_d = v;
        }
        if let Some(v) = overrides.d_max {
            cfg.d_max = v;
        }
        if let Some(v) = overrides.tau {
            cfg.tau = v;
        }
        if let Some(v) = overrides.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_d == 0 {
            bail!("n_d must be at least 1");
        }
        if !(self.d_max > 0.0 && self.d_max.is_finite()) {
            bail!("d_max must be a positive number of metres, got {}", self.d_max);
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            bail!("tau must be positive, got {}", self.tau);
        }
        if self.channels == 0 || self.stride == 0 {
            bail!("channels and stride must be at least 1");
        }
        let [w, h] = self.padding;
        if w == 0 || h == 0 || w % self.stride != 0 || h % self.stride != 0 {
            bail!("padding {w}x{h} must be non-empty and divisible by the stride {}", self.stride);
        }
        for (class, t) in &self.iou_thresholds {
            if !(*t > 0.0 && *t <= 1.0) {
                bail!("IoU threshold for {class} must lie in (0, 1], got {t}");
            }
        }
        Ok(())
    }

    /// `(height, width)` of the padded input grid.
    pub fn padded_size(&self) -> (usize, usize) {
        (self.padding[1], self.padding[0])
    }

    /// Errors when a `height × width` source does not fit in the padding.
    pub fn check_fits(&self, height: usize, width: usize) -> Result<()> {
        let (ph, pw) = self.padded_size();
        if height > ph || width > pw {
            bail!("input {width}x{height} exceeds the padding target {pw}x{ph}");
        }
        Ok(())
    }

    /// Threshold for `class`, and whether it is the assumed non-Car default.
    pub fn iou_threshold(&self, class: &str) -> (f64, bool) {
        let (default, assumed) = default_iou_threshold(class);
        match self.iou_thresholds.get(class) {
            Some(&t) => (t, assumed && t == default),
            None => (default, assumed),
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            n_intervals: self.n_d,
            d_max: self.d_max,
            channels: self.channels,
            stride: self.stride,
            input_size: self.padded_size(),
            seed: self.seed,
        }
    }
}
