//! Random KITTI-like mini-datasets for evaluation tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use adisep_core::kitti_io::ObjectLabel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Dataset = Vec<(Vec<ObjectLabel>, Vec<ObjectLabel>)>;

pub fn random_object(rng: &mut ChaCha8Rng, class: &str) -> ObjectLabel {
    let left = rng.random_range(0.0..1100.0);
    let top = rng.random_range(120.0..260.0);
    ObjectLabel {
        class: class.to_string(),
        truncation: [0.0, 0.1, 0.2, 0.4, 0.6][rng.random_range(0..5)],
        occlusion: rng.random_range(0..=3),
        alpha: rng.random_range(-3.0..3.0),
        bbox: [
            left,
            top,
            left + rng.random_range(15.0..150.0),
            top + rng.random_range(15.0..90.0),
        ],
        dimensions: [
            rng.random_range(1.3..1.9),
            rng.random_range(1.4..1.9),
            rng.random_range(3.2..4.6),
        ],
        location: [
            rng.random_range(-8.0..8.0),
            rng.random_range(1.4..1.9),
            rng.random_range(6.0..30.0),
        ],
        rotation_y: rng.random_range(-PI..PI),
        score: None,
    }
}

/// A noisy copy of `gt` as a detection.
pub fn jittered(rng: &mut ChaCha8Rng, gt: &ObjectLabel, score: f64) -> ObjectLabel {
    let mut d = gt.clone();
    let j = rng.random_range(0.0..0.8);
    for v in d.location.iter_mut() {
        *v += rng.random_range(-j..=j) * 0.6;
    }
    for v in d.dimensions.iter_mut() {
        *v *= 1.0 + rng.random_range(-0.15..0.15) * j;
    }
    d.rotation_y = (d.rotation_y + rng.random_range(-0.3..0.3) * j).clamp(-PI, PI);
    for v in d.bbox.iter_mut() {
        *v += rng.random_range(-4.0..4.0);
    }
    if d.bbox[3] <= d.bbox[1] + 1.0 {
        d.bbox[3] = d.bbox[1] + 1.0;
    }
    if d.bbox[2] <= d.bbox[0] + 1.0 {
        d.bbox[2] = d.bbox[0] + 1.0;
    }
    d.truncation = -1.0;
    d.occlusion = -1;
    d.alpha = -10.0;
    d.score = Some(score);
    d
}

fn random_score(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.5) {
        // coarse grid: plenty of ties
        rng.random_range(1..=8) as f64 / 8.0
    } else {
        rng.random_range(0.0..1.0)
    }
}

/// At most 10 images, 20 ground-truth rows and 50 detections in total.
pub fn random_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = rng.random_range(1..=10);
    let mut gt_budget = 20usize;
    let mut det_budget = 50usize;
    let mut out = Vec::with_capacity(images);
    for _ in 0..images {
        let mut gt = Vec::new();
        let mut dets = Vec::new();
        let n_gt = rng.random_range(0..=4).min(gt_budget);
        gt_budget -= n_gt;
        for _ in 0..n_gt {
            let class = ["Car", "Car", "Car", "Van", "Pedestrian", "DontCare"][rng.random_range(0..6)];
            let g = random_object(&mut rng, class);
            if g.class != "DontCare" && det_budget > 0 && rng.random_bool(0.75) {
                let class = if rng.random_bool(0.9) { "Car" } else { "Pedestrian" };
                let score = random_score(&mut rng);
                let mut d = jittered(&mut rng, &g, score);
                d.class = class.to_string();
                dets.push(d);
                det_budget -= 1;
            }
            gt.push(g);
        }
        let n_noise = rng.random_range(0..=3).min(det_budget);
        det_budget -= n_noise;
        for _ in 0..n_noise {
            let mut d = random_object(&mut rng, "Car");
            d.truncation = -1.0;
            d.occlusion = -1;
            d.alpha = -10.0;
            d.score = Some(random_score(&mut rng));
            // sometimes drop it onto an existing box so duplicates compete
            if let Some(g) = gt.first().filter(|_| rng.random_bool(0.3)) {
                d = jittered(&mut rng, g, d.score.unwrap());
                d.class = "Car".into();
            }
            dets.push(d);
        }
        out.push((gt, dets));
    }
    out
}

/// Detections identical to the ground truth of `class`, all scored 1.0.
pub fn perfect_detections(gt: &[ObjectLabel], class: &str) -> Vec<ObjectLabel> {
    gt.iter()
        .filter(|g| g.class == class)
        .map(|g| {
            let mut d = g.clone();
            d.score = Some(1.0);
            d
        })
        .collect()
}
