//! 3D boxes in KITTI camera coordinates and their BEV / 3D overlap.
//!
//! Camera frame: `x` right, `y` down, `z` forward. A box is anchored at the
//! centre of its bottom face, so it spans `[y − h, y]` vertically, and is
//! rotated by `rotation_y` about the vertical axis.

use std::cmp::Ordering;

/// On-edge tolerance (metres) when clipping.
pub const CLIP_EPS: f64 = 1e-9;
/// Intersection areas below this are reported as zero.
pub const AREA_EPS: f64 = 1e-12;

pub type Point2 = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Box3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub h: f64,
    pub w: f64,
    pub l: f64,
    pub rotation_y: f64,
}

impl Box3D {
    pub fn bev_area(&self) -> f64 {
        self.l * self.w
    }

    pub fn volume(&self) -> f64 {
        self.l * self.w * self.h
    }

    /// Footprint corners in the `(x, z)` plane, counter-clockwise.
    ///
    /// The length axis points along `(cos ry, −sin ry)`, the KITTI devkit
    /// convention for a rotation about camera `y`.
    pub fn bev_polygon(&self) -> [Point2; 4] {
        let (s, c) = self.rotation_y.sin_cos();
        let (hl, hw) = (self.l / 2.0, self.w / 2.0);
        [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].map(|(dx, dz)| {
            [self.x + c * dx + s * dz, self.z - s * dx + c * dz]
        })
    }

    /// Vertical extent `[y − h, y]`.
    pub fn y_range(&self) -> (f64, f64) {
        (self.y - self.h, self.y)
    }

    /// Whether `(x, z)` lies inside the footprint (boundary inclusive).
    pub fn bev_contains(&self, px: f64, pz: f64) -> bool {
        let (s, c) = self.rotation_y.sin_cos();
        let (dx, dz) = (px - self.x, pz - self.z);
        let along = c * dx - s * dz;
        let across = s * dx + c * dz;
        along.abs() <= self.l / 2.0 && across.abs() <= self.w / 2.0
    }

    fn total_order(&self, other: &Self) -> Ordering {
        let a = [self.x, self.y, self.z, self.h, self.w, self.l, self.rotation_y];
        let b = [other.x, other.y, other.z, other.h, other.w, other.l, other.rotation_y];
        a.iter()
            .zip(&b)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Shoelace signed area (positive for counter-clockwise).
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
        / 2.0
}

fn ccw(poly: &[Point2]) -> Vec<Point2> {
    let mut v = poly.to_vec();
    if signed_area(&v) < 0.0 {
        v.reverse();
    }
    v
}

/// Sutherland–Hodgman: clips `subject` against every edge of convex `clip`.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let clip = ccw(clip);
    let mut out = ccw(subject);
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        if len == 0.0 {
            continue;
        }
        // Signed distance to the edge line, positive on the inner (left) side.
        let dist = |p: Point2| cross(a, b, p) / len;
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (dc, dp) = (dist(cur), dist(prev));
            let (cur_in, prev_in) = (dc >= -CLIP_EPS, dp >= -CLIP_EPS);
            if cur_in != prev_in {
                let t = dp / (dp - dc);
                out.push([prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])]);
            }
            if cur_in {
                out.push(cur);
            }
        }
    }
    out
}

/// Area of the intersection of two convex polygons.
pub fn polygon_intersection_area(p: &[Point2], q: &[Point2]) -> f64 {
    if p.len() < 3 || q.len() < 3 {
        return 0.0;
    }
    let area = signed_area(&clip_convex(p, q)).abs();
    if area < AREA_EPS {
        0.0
    } else {
        area
    }
}

fn ordered<'a>(a: &'a Box3D, b: &'a Box3D) -> (&'a Box3D, &'a Box3D) {
    if a.total_order(b).is_gt() {
        (b, a)
    } else {
        (a, b)
    }
}

pub fn bev_intersection(a: &Box3D, b: &Box3D) -> f64 {
    let (a, b) = ordered(a, b);
    polygon_intersection_area(&a.bev_polygon(), &b.bev_polygon())
}

fn ratio(inter: f64, union: f64) -> f64 {
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Intersection over union of the BEV footprints.
pub fn iou_bev(a: &Box3D, b: &Box3D) -> f64 {
    let inter = bev_intersection(a, b);
    ratio(inter, a.bev_area() + b.bev_area() - inter)
}

/// Vertical overlap of the `[y − h, y]` extents.
pub fn height_overlap(a: &Box3D, b: &Box3D) -> f64 {
    let (a0, a1) = a.y_range();
    let (b0, b1) = b.y_range();
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Volumetric IoU for boxes rotated about the vertical axis only.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let inter = bev_intersection(a, b) * height_overlap(a, b);
    ratio(inter, a.volume() + b.volume() - inter)
}
