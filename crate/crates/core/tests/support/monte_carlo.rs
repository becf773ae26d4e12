//! Sampling estimates of box overlap, independent of the polygon clipper.

#![allow(dead_code)]

use adisep_core::geometry::Box3D;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A footprint in its own frame: length along local x, width along local z.
struct Footprint {
    x: f64,
    z: f64,
    s: f64,
    c: f64,
    half_l: f64,
    half_w: f64,
}

impl Footprint {
    fn of(b: &Box3D) -> Self {
        let (s, c) = b.rotation_y.sin_cos();
        Self { x: b.x, z: b.z, s, c, half_l: b.l / 2.0, half_w: b.w / 2.0 }
    }

    fn inside(&self, px: f64, pz: f64) -> bool {
        let (dx, dz) = (px - self.x, pz - self.z);
        let along = self.c * dx - self.s * dz;
        let across = self.s * dx + self.c * dz;
        along.abs() <= self.half_l && across.abs() <= self.half_w
    }
}

/// Axis-aligned `(x0, x1, z0, z1)` hull of the footprint.
fn extent(b: &Box3D) -> (f64, f64, f64, f64) {
    let (s, c) = b.rotation_y.sin_cos();
    let rx = (c * b.l / 2.0).abs() + (s * b.w / 2.0).abs();
    let rz = (s * b.l / 2.0).abs() + (c * b.w / 2.0).abs();
    (b.x - rx, b.x + rx, b.z - rz, b.z + rz)
}

/// BEV IoU from `samples` uniform draws over `a`'s axis-aligned hull.
pub fn bev_iou(a: &Box3D, b: &Box3D, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x0, x1, z0, z1) = extent(a);
    let (fa, fb) = (Footprint::of(a), Footprint::of(b));
    let mut hits = 0usize;
    for _ in 0..samples {
        let px = rng.random_range(x0..x1);
        let pz = rng.random_range(z0..z1);
        if fa.inside(px, pz) && fb.inside(px, pz) {
            hits += 1;
        }
    }
    let inter = hits as f64 / samples as f64 * (x1 - x0) * (z1 - z0);
    inter / (a.l * a.w + b.l * b.w - inter)
}

/// 3D IoU from uniform draws over `a`'s hull, vertical span `[y − h, y]`.
pub fn iou_3d(a: &Box3D, b: &Box3D, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x0, x1, z0, z1) = extent(a);
    let (y0, y1) = (a.y - a.h, a.y);
    let (fa, fb) = (Footprint::of(a), Footprint::of(b));
    let mut hits = 0usize;
    for _ in 0..samples {
        let px = rng.random_range(x0..x1);
        let pz = rng.random_range(z0..z1);
        let py = rng.random_range(y0..y1);
        if fa.inside(px, pz) && fb.inside(px, pz) && py >= b.y - b.h && py <= b.y {
            hits += 1;
        }
    }
    let inter = hits as f64 / samples as f64 * (x1 - x0) * (z1 - z0) * (y1 - y0);
    inter / (a.l * a.w * a.h + b.l * b.w * b.h - inter)
}

/// A box, and a second one placed close enough to overlap most of the time.
pub fn random_pair(rng: &mut ChaCha8Rng) -> (Box3D, Box3D) {
    let mut bx = |cx: f64, cz: f64, cy: f64| Box3D {
        x: cx + rng.random_range(-2.0..2.0),
        y: cy + rng.random_range(-0.5..0.5),
        z: cz + rng.random_range(-2.0..2.0),
        h: rng.random_range(0.5..2.5),
        w: rng.random_range(0.4..2.5),
        l: rng.random_range(0.4..5.0),
        rotation_y: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    };
    let a = bx(0.0, 20.0, 1.6);
    let b = bx(a.x, a.z, a.y);
    (a, b)
}
