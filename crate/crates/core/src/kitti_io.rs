//! KITTI object labels / detection results, `P2` calibration and 16-bit depth PNGs.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::adis::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::Box3D;
use crate::png_io;

pub const DONT_CARE: &str = "DontCare";

/// Angles within this much of `±π` are accepted: two-decimal serialisation
/// and detector output routinely land a hair outside the closed interval.
const ANGLE_SLACK: f64 = 5e-3;

/// Result files use `-10` for detectors that do not estimate alpha.
const ALPHA_UNSET: f64 = -10.0;

/// Depth PNGs store `round(depth · 256)`.
pub const DEPTH_SCALE: f64 = 256.0;

/// One row of a KITTI label or result file.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectLabel {
    pub class: String,
    /// Fraction in `[0, 1]`, or `-1` when unknown (result files).
    pub truncation: f64,
    /// `0..=3`, or `-1` when unknown (result files).
    pub occlusion: i32,
    pub alpha: f64,
    /// `(left, top, right, bottom)` in pixels.
    pub bbox: [f64; 4],
    /// `(h, w, l)` in metres.
    pub dimensions: [f64; 3],
    /// Bottom-centre `(x, y, z)` in camera coordinates, metres.
    pub location: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

impl ObjectLabel {
    pub fn is_dont_care(&self) -> bool {
        self.class == DONT_CARE
    }

    pub fn bbox_height(&self) -> f64 {
        self.bbox[3] - self.bbox[1]
    }

    pub fn box3d(&self) -> Box3D {
        let [h, w, l] = self.dimensions;
        let [x, y, z] = self.location;
        Box3D {
            x,
            y,
            z,
            h,
            w,
            l,
            rotation_y: self.rotation_y,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(self.truncation == -1.0 || (0.0..=1.0).contains(&self.truncation)) {
            return Err(format!("truncation {} outside [0, 1]", self.truncation));
        }
        if !(-1..=3).contains(&self.occlusion) {
            return Err(format!("occlusion {} outside 0..=3", self.occlusion));
        }
        if self.is_dont_care() {
            return Ok(());
        }
        let [l, t, r, b] = self.bbox;
        if !(r > l && b > t) {
            return Err(format!("degenerate 2D box ({l}, {t}, {r}, {b})"));
        }
        if let Some(d) = self.dimensions.iter().find(|&&d| !(d > 0.0)) {
            return Err(format!("non-positive dimension {d}"));
        }
        if self.rotation_y.abs() > PI + ANGLE_SLACK {
            return Err(format!("rotation_y {} outside [-pi, pi]", self.rotation_y));
        }
        if self.alpha != ALPHA_UNSET && self.alpha.abs() > PI + ANGLE_SLACK {
            return Err(format!("alpha {} outside [-pi, pi]", self.alpha));
        }
        if let Some(s) = self.score {
            if !s.is_finite() {
                return Err(format!("score {s} is not finite"));
            }
        }
        Ok(())
    }
}

fn parse_line(line: &str) -> std::result::Result<ObjectLabel, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 15 && fields.len() != 16 {
        return Err(format!("expected 15 or 16 fields, found {}", fields.len()));
    }
    let num = |i: usize| -> std::result::Result<f64, String> {
        let v: f64 = fields[i]
            .parse()
            .map_err(|_| format!("field {} ({:?}) is not a number", i + 1, fields[i]))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("field {} is not finite", i + 1))
        }
    };
    let occlusion = fields[2]
        .parse::<i32>()
        .map_err(|_| format!("field 3 ({:?}) is not an integer occlusion level", fields[2]))?;
    let label = ObjectLabel {
        class: fields[0].to_string(),
        truncation: num(1)?,
        occlusion,
        alpha: num(3)?,
        bbox: [num(4)?, num(5)?, num(6)?, num(7)?],
        dimensions: [num(8)?, num(9)?, num(10)?],
        location: [num(11)?, num(12)?, num(13)?],
        rotation_y: num(14)?,
        score: if fields.len() == 16 { Some(num(15)?) } else { None },
    };
    label.validate()?;
    Ok(label)
}

/// Parses a label or result file. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_label_file(text: &str) -> Result<Vec<ObjectLabel>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_line(l).map_err(|msg| Error::Parse { line: i + 1, msg }))
        .collect()
}

/// KITTI text row: geometry at 2 decimals, score (when present) at 6.
pub fn format_label_line(label: &ObjectLabel) -> String {
    let mut s = format!(
        "{} {:.2} {} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2}",
        label.class,
        label.truncation,
        label.occlusion,
        label.alpha,
        label.bbox[0],
        label.bbox[1],
        label.bbox[2],
        label.bbox[3],
        label.dimensions[0],
        label.dimensions[1],
        label.dimensions[2],
        label.location[0],
        label.location[1],
        label.location[2],
        label.rotation_y,
    );
    if let Some(score) = label.score {
        let _ = write!(s, " {score:.6}");
    }
    s
}

/// Serialises detections; every label must carry a score.
pub fn write_result_file(labels: &[ObjectLabel]) -> Result<String> {
    let mut out = String::new();
    for (i, label) in labels.iter().enumerate() {
        if label.score.is_none() {
            return Err(Error::Contract(format!("detection {i} ({}) has no score", label.class)));
        }
        out.push_str(&format_label_line(label));
        out.push('\n');
    }
    Ok(out)
}

/// Left colour camera projection matrix `P2` (3×4, row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct CameraCalib {
    pub p2: [[f64; 4]; 3],
}

impl CameraCalib {
    pub fn new(p2: [[f64; 4]; 3]) -> Result<Self> {
        if !(p2[0][0] > 0.0 && p2[1][1] > 0.0) {
            return Err(Error::Parameter(format!(
                "P2 focal entries must be positive, got fx={} fy={}",
                p2[0][0], p2[1][1]
            )));
        }
        if p2.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("P2 contains non-finite entries".into()));
        }
        Ok(Self { p2 })
    }

    pub fn fx(&self) -> f64 {
        self.p2[0][0]
    }

    pub fn fy(&self) -> f64 {
        self.p2[1][1]
    }

    pub fn cx(&self) -> f64 {
        self.p2[0][2]
    }

    pub fn cy(&self) -> f64 {
        self.p2[1][2]
    }

    /// Projects a camera-frame point to pixel coordinates.
    pub fn project(&self, p: [f64; 3]) -> (f64, f64) {
        let h = |r: usize| {
            self.p2[r][0] * p[0] + self.p2[r][1] * p[1] + self.p2[r][2] * p[2] + self.p2[r][3]
        };
        let s = h(2);
        (h(0) / s, h(1) / s)
    }
}

/// Extracts `P2` from a KITTI calibration file; other entries are ignored.
pub fn parse_calib(text: &str) -> Result<CameraCalib> {
    for (i, line) in text.lines().enumerate() {
        let Some(rest) = line.trim_start().strip_prefix("P2:") else {
            continue;
        };
        let parse_err = |msg: String| Error::Parse { line: i + 1, msg };
        let vals = rest
            .split_whitespace()
            .enumerate()
            .map(|(k, t)| {
                t.parse::<f64>()
                    .map_err(|_| parse_err(format!("P2 entry {} ({t:?}) is not a number", k + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != 12 {
            return Err(parse_err(format!("P2 has {} entries, expected 12", vals.len())));
        }
        let mut p2 = [[0.0; 4]; 3];
        for (k, v) in vals.into_iter().enumerate() {
            p2[k / 4][k % 4] = v;
        }
        return CameraCalib::new(p2);
    }
    Err(Error::Parse {
        line: text.lines().count(),
        msg: "no P2: entry found".into(),
    })
}

/// Decodes a KITTI depth PNG: `depth = stored / 256`, stored 0 = no measurement.
pub fn read_depth_png(bytes: &[u8]) -> Result<DepthMap> {
    let (w, h, samples) = png_io::decode_gray16(bytes)?;
    let depth = samples.iter().map(|&s| s as f64 / DEPTH_SCALE).collect();
    DepthMap::from_depths(h, w, depth)
}

/// Encodes a depth map as a KITTI depth PNG.
///
/// Valid depths too small to survive quantisation are stored as 1 (1/256 m)
/// so they stay valid; depths beyond `65535/256` m are rejected.
pub fn write_depth_png(map: &DepthMap) -> Result<Vec<u8>> {
    let max = u16::MAX as f64 / DEPTH_SCALE;
    let samples = map
        .depths()
        .iter()
        .zip(map.mask())
        .map(|(&d, &ok)| {
            if !ok {
                return Ok(0u16);
            }
            if d > max {
                return Err(Error::Format(format!(
                    "depth {d} m exceeds the 16-bit range ({max} m)"
                )));
            }
            Ok(((d * DEPTH_SCALE).round() as u16).max(1))
        })
        .collect::<Result<Vec<u16>>>()?;
    png_io::encode_gray16(map.width(), map.height(), &samples)
}
