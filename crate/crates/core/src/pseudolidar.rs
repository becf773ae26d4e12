//! Depth-map back-projection to camera-frame point clouds, and ASCII PLY I/O.

use std::fmt::Write as _;

use crate::adis::{DepthMap, SubDepthStack};
use crate::error::{Error, Result};
use crate::kitti_io::CameraCalib;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    /// Zero-based interval index per point, when the cloud came from a stack.
    pub intervals: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Inverse of `P2` for a known camera-frame depth.
///
/// Needs the usual upper-triangular intrinsics layout (`P2[1][0] = P2[2][0] =
/// P2[2][1] = 0`); the translation column is honoured in full.
#[derive(Clone, Copy, Debug)]
struct Unprojector {
    p: [[f64; 4]; 3],
}

impl Unprojector {
    fn new(calib: &CameraCalib) -> Result<Self> {
        let p = calib.p2;
        if p[1][0] != 0.0 || p[2][0] != 0.0 || p[2][1] != 0.0 {
            return Err(Error::Parameter(
                "P2 must have zero entries below the intrinsics diagonal".into(),
            ));
        }
        if !(p[0][0] > 0.0 && p[1][1] > 0.0) {
            return Err(Error::Parameter("P2 focal entries must be positive".into()));
        }
        if !(p[2][2] > 0.0) {
            return Err(Error::Parameter("P2[2][2] must be positive".into()));
        }
        Ok(Self { p })
    }

    /// Solves `P2 · [x, y, z, 1]ᵀ ∝ [u, v, 1]ᵀ` for `x, y`.
    fn point(&self, u: f64, v: f64, z: f64) -> Result<[f64; 3]> {
        let p = &self.p;
        let s = p[2][2] * z + p[2][3];
        if !(s > 0.0) {
            return Err(Error::Parameter(format!(
                "depth {z} projects behind the camera under P2"
            )));
        }
        let y = (v * s - p[1][2] * z - p[1][3]) / p[1][1];
        let x = (u * s - p[0][1] * y - p[0][2] * z - p[0][3]) / p[0][0];
        Ok([x, y, z])
    }
}

fn backproject_layer(
    depth: &[f64],
    width: usize,
    unproj: &Unprojector,
    out: &mut Vec<[f64; 3]>,
) -> Result<usize> {
    let before = out.len();
    for (i, &z) in depth.iter().enumerate() {
        if z > 0.0 {
            let (u, v) = ((i % width) as f64, (i / width) as f64);
            out.push(unproj.point(u, v, z)?);
        }
    }
    Ok(out.len() - before)
}

/// One point per valid pixel, in row-major pixel order.
pub fn backproject(dep: &DepthMap, calib: &CameraCalib) -> Result<PointCloud> {
    let unproj = Unprojector::new(calib)?;
    let mut points = Vec::with_capacity(dep.valid_count());
    backproject_layer(dep.depths(), dep.width(), &unproj, &mut points)?;
    Ok(PointCloud {
        points,
        intervals: None,
    })
}

/// Layer-by-layer back-projection, each point tagged with its layer.
pub fn backproject_stack(stack: &SubDepthStack, calib: &CameraCalib) -> Result<PointCloud> {
    let unproj = Unprojector::new(calib)?;
    let mut points = Vec::new();
    let mut intervals = Vec::new();
    for (i, layer) in stack.layers().iter().enumerate() {
        let n = backproject_layer(layer, stack.width(), &unproj, &mut points)?;
        intervals.extend(std::iter::repeat_n(i as u32, n));
    }
    Ok(PointCloud {
        points,
        intervals: Some(intervals),
    })
}

/// ASCII PLY with `float x, y, z` and, for tagged clouds, an `int interval`.
pub fn write_ply(pc: &PointCloud) -> Vec<u8> {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", pc.points.len());
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    if pc.intervals.is_some() {
        s.push_str("property int interval\n");
    }
    s.push_str("end_header\n");
    for (i, p) in pc.points.iter().enumerate() {
        let _ = write!(s, "{} {} {}", p[0] as f32, p[1] as f32, p[2] as f32);
        if let Some(tags) = &pc.intervals {
            let _ = write!(s, " {}", tags[i]);
        }
        s.push('\n');
    }
    s.into_bytes()
}

/// Reads back the ASCII layout produced by [`write_ply`].
pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Format(format!("ply is not utf-8: {e}")))?;
    let mut lines = text.lines().enumerate();
    let perr = |line: usize, msg: &str| Error::Parse {
        line: line + 1,
        msg: msg.to_string(),
    };
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(perr(0, "missing ply magic")),
    }
    let mut count = None;
    let mut props = Vec::new();
    for (i, line) in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", "1.0"] => {}
            ["format", ..] => return Err(perr(i, "only ascii 1.0 is supported")),
            ["comment", ..] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| perr(i, "bad vertex count"))?)
            }
            ["property", _, name] => props.push(name.to_string()),
            ["end_header"] => break,
            _ => return Err(perr(i, "unexpected header line")),
        }
    }
    let count = count.ok_or_else(|| perr(0, "no vertex element"))?;
    let tagged = match props.as_slice() {
        [x, y, z] if x == "x" && y == "y" && z == "z" => false,
        [x, y, z, t] if x == "x" && y == "y" && z == "z" && t == "interval" => true,
        _ => return Err(Error::Format(format!("unsupported vertex properties {props:?}"))),
    };
    let mut points = Vec::with_capacity(count);
    let mut intervals = tagged.then(Vec::new);
    for (i, line) in lines.take(count) {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != props.len() {
            return Err(perr(i, "wrong number of vertex fields"));
        }
        let f = |k: usize| toks[k].parse::<f64>().map_err(|_| perr(i, "bad coordinate"));
        points.push([f(0)?, f(1)?, f(2)?]);
        if let Some(tags) = intervals.as_mut() {
            tags.push(toks[3].parse::<u32>().map_err(|_| perr(i, "bad interval index"))?);
        }
    }
    if points.len() != count {
        return Err(Error::Format(format!("expected {count} vertices, found {}", points.len())));
    }
    Ok(PointCloud { points, intervals })
}
