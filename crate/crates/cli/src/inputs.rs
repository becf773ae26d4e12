//! Loading and padding the per-frame inputs.

use std::path::Path;

use adisep_core::adis::DepthMap;
use adisep_core::kitti_io::{parse_calib, read_depth_png, CameraCalib};
use adisep_core::png_io;
use adisep_core::tensor::FeatureMap;
use anyhow::{bail, Context, Result};

use crate::config::Config;

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    read_depth_png(&bytes).with_context(|| format!("decoding depth PNG {}", path.display()))
}

pub fn read_calib(path: &Path) -> Result<CameraCalib> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_calib(&text).with_context(|| format!("parsing calibration {}", path.display()))
}

/// 8-bit grayscale image scaled to `[0, 1]`; must match the depth size.
pub fn read_image(path: &Path, height: usize, width: usize) -> Result<FeatureMap> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let (w, h, px) = png_io::decode_gray8(&bytes).with_context(|| format!("decoding {}", path.display()))?;
    if (h, w) != (height, width) {
        bail!("image {} is {w}x{h} but the depth map is {width}x{height}", path.display());
    }
    Ok(FeatureMap::new(1, h, w, px.iter().map(|&p| p as f64 / 255.0).collect())?)
}

/// Zero-pads a single-channel map at the bottom and right.
fn pad_image(img: &FeatureMap, height: usize, width: usize) -> FeatureMap {
    let (_, h, w) = img.shape();
    FeatureMap::from_fn(1, height, width, |_, y, x| if y < h && x < w { img.get(0, y, x) } else { 0.0 })
        .expect("padding target is non-empty")
}

/// Padded depth and image ready for the demo pipeline. Without an image the
/// appearance branch sees zeros.
pub fn pipeline_inputs(cfg: &Config, depth: &DepthMap, image: Option<&Path>) -> Result<(FeatureMap, DepthMap)> {
    let (h, w) = (depth.height(), depth.width());
    cfg.check_fits(h, w)?;
    let (ph, pw) = cfg.padded_size();
    let img = match image {
        Some(p) => pad_image(&read_image(p, h, w)?, ph, pw),
        None => FeatureMap::zeros(1, ph, pw),
    };
    Ok((img, depth.pad_to(ph, pw)?))
}
