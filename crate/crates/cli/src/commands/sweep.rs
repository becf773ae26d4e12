//! `adisep sweep-nd`: separation statistics for several interval counts.

use std::fmt;
use std::path::{Path, PathBuf};

use adisep_core::adis::{separate, DepthMap, IntervalPartition, SubDepthStack};
use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Config;
use crate::inputs::read_depth;

pub const DEFAULT_ND: [usize; 4] = [4, 8, 16, 32];

/// Valid pixels with a valid 4-neighbour that landed in a different layer.
pub fn boundary_pixels(stack: &SubDepthStack) -> usize {
    let (h, w) = (stack.height(), stack.width());
    let mut count = 0;
    for y in 0..h {
        for x in 0..w {
            let Some(here) = stack.layer_at(y, x) else { continue };
            let neighbours = [
                (y.wrapping_sub(1), x),
                (y + 1, x),
                (y, x.wrapping_sub(1)),
                (y, x + 1),
            ];
            if neighbours
                .iter()
                .filter(|&&(ny, nx)| ny < h && nx < w)
                .any(|&(ny, nx)| stack.layer_at(ny, nx).is_some_and(|l| l != here))
            {
                count += 1;
            }
        }
    }
    count
}

/// Mean over layers of the zero-pixel fraction.
pub fn mean_sparsity(stack: &SubDepthStack) -> f64 {
    let area = (stack.height() * stack.width()) as f64;
    let total: f64 = stack
        .layers()
        .iter()
        .map(|l| l.iter().filter(|&&v| v == 0.0).count() as f64 / area)
        .sum();
    total / stack.n_layers() as f64
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub n_d: usize,
    pub bounds: Vec<f64>,
    /// Pixel counts per interval, summed over all frames.
    pub occupancy: Vec<usize>,
    pub valid_pixels: usize,
    pub boundary_pixels: usize,
    pub boundary_fraction: f64,
    /// Averaged over frames.
    pub mean_sparsity: f64,
}

#[derive(Debug, Serialize)]
pub struct SweepReport {
    pub frames: Vec<String>,
    pub d_max: f64,
    pub rows: Vec<SweepRow>,
}

impl fmt::Display for SweepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "frames: {} (uniform bounds over [0, {}] m)", self.frames.len(), self.d_max)?;
        writeln!(f, "{:>4} {:>10} {:>10} {:>10} {:>10}  occupancy", "n_d", "valid", "boundary", "bnd_frac", "sparsity")?;
        for r in &self.rows {
            let occ: Vec<String> = r.occupancy.iter().map(|c| c.to_string()).collect();
            writeln!(
                f,
                "{:>4} {:>10} {:>10} {:>10.4} {:>10.4}  {}",
                r.n_d,
                r.valid_pixels,
                r.boundary_pixels,
                r.boundary_fraction,
                r.mean_sparsity,
                occ.join(" ")
            )?;
        }
        write!(f, "boundary = valid pixel with a valid 4-neighbour in another interval")
    }
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "png") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn sweep(cfg: &Config, depths: &[DepthMap], nds: &[usize]) -> Result<Vec<SweepRow>> {
    nds.iter()
        .map(|&n_d| {
            let part = IntervalPartition::uniform(n_d, cfg.d_max)?;
            let stats: Vec<(Vec<usize>, usize, usize, f64)> = depths
                .par_iter()
                .map(|d| {
                    let stack = separate(d, &part);
                    (stack.occupancy(), d.valid_count(), boundary_pixels(&stack), mean_sparsity(&stack))
                })
                .collect();
            let mut occupancy = vec![0; n_d];
            let (mut valid, mut boundary, mut sparsity) = (0, 0, 0.0);
            for (occ, v, b, s) in &stats {
                occupancy.iter_mut().zip(occ).for_each(|(a, c)| *a += c);
                valid += v;
                boundary += b;
                sparsity += s;
            }
            Ok(SweepRow {
                n_d,
                bounds: part.bounds().to_vec(),
                occupancy,
                valid_pixels: valid,
                boundary_pixels: boundary,
                boundary_fraction: if valid == 0 { 0.0 } else { boundary as f64 / valid as f64 },
                mean_sparsity: sparsity / stats.len().max(1) as f64,
            })
        })
        .collect()
}

pub fn run(cfg: &Config, dir: &Path, nds: &[usize]) -> Result<SweepReport> {
    if nds.iter().any(|&n| n == 0) {
        bail!("every n_d must be >= 1");
    }
    let files = png_files(dir)?;
    if files.is_empty() {
        bail!("no .png depth maps in {}", dir.display());
    }
    let depths: Vec<DepthMap> = files.par_iter().map(|p| read_depth(p)).collect::<Result<_>>()?;
    Ok(SweepReport {
        frames: files
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect(),
        d_max: cfg.d_max,
        rows: sweep(cfg, &depths, nds)?,
    })
}
