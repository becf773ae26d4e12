//! Exhaustive AP@40 reference.
//!
//! Written from the protocol description alone: for every distinct score it
//! keeps only the detections at or above that score, re-runs the matching
//! from scratch on each image, and tallies TP / FP. No state is shared across
//! cutoffs, so it does not rely on greedy matching being prefix-stable.

#![allow(dead_code)]

use adisep_core::eval::{Difficulty, EvalConfig, Metric};
use adisep_core::geometry::{iou_3d, iou_bev};
use adisep_core::kitti_io::ObjectLabel;

/// `(min 2D height px, max occlusion, max truncation)` from the public devkit.
fn thresholds(d: Difficulty) -> (f64, i32, f64) {
    match d {
        Difficulty::Easy => (40.0, 0, 0.15),
        Difficulty::Moderate => (25.0, 1, 0.30),
        Difficulty::Hard => (25.0, 2, 0.50),
    }
}

fn overlap(metric: Metric, a: &ObjectLabel, b: &ObjectLabel) -> f64 {
    match metric {
        Metric::Bev => iou_bev(&a.box3d(), &b.box3d()),
        Metric::ThreeD => iou_3d(&a.box3d(), &b.box3d()),
    }
}

/// Share of `d`'s 2D box area lying inside `r`.
fn covered(d: &[f64; 4], r: &[f64; 4]) -> f64 {
    let x0 = d[0].max(r[0]);
    let x1 = d[2].min(r[2]);
    let y0 = d[1].max(r[1]);
    let y1 = d[3].min(r[3]);
    if x1 <= x0 || y1 <= y0 {
        return 0.0;
    }
    let own = (d[2] - d[0]) * (d[3] - d[1]);
    if own <= 0.0 {
        0.0
    } else {
        (x1 - x0) * (y1 - y0) / own
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Role {
    Counted,
    Ignored,
}

struct Tally {
    tp: usize,
    fp: usize,
}

/// TP / FP on one image using only detections scoring at least `cut`.
fn tally_image(gt: &[ObjectLabel], dets: &[ObjectLabel], cfg: &EvalConfig, cut: f64) -> Tally {
    let (min_h, max_occ, max_trunc) = thresholds(cfg.difficulty);
    let mut pool: Vec<(&ObjectLabel, Role)> = Vec::new();
    let mut regions: Vec<[f64; 4]> = Vec::new();
    for g in gt {
        if g.class == "DontCare" {
            regions.push(g.bbox);
            continue;
        }
        if g.class == cfg.class {
            let easy_enough = g.bbox[3] - g.bbox[1] >= min_h && g.occlusion <= max_occ && g.truncation <= max_trunc;
            pool.push((g, if easy_enough { Role::Counted } else { Role::Ignored }));
        } else if cfg.ignore_classes.contains(&g.class) {
            pool.push((g, Role::Ignored));
        }
    }

    let mut kept: Vec<(usize, &ObjectLabel)> = dets
        .iter()
        .filter(|d| d.class == cfg.class && d.score.unwrap() >= cut)
        .enumerate()
        .collect();
    // Highest score first; equal scores in file order.
    kept.sort_by(|a, b| {
        b.1.score
            .unwrap()
            .partial_cmp(&a.1.score.unwrap())
            .unwrap()
            .then(a.0.cmp(&b.0))
    });

    let mut used = vec![false; pool.len()];
    let mut t = Tally { tp: 0, fp: 0 };
    for (_, d) in kept {
        let mut pick: Option<usize> = None;
        for want in [Role::Counted, Role::Ignored] {
            let mut best = -1.0;
            for (gi, (g, role)) in pool.iter().enumerate() {
                if used[gi] || *role != want {
                    continue;
                }
                let o = overlap(cfg.metric, d, g);
                if o >= cfg.iou_threshold && o > best {
                    best = o;
                    pick = Some(gi);
                }
            }
            if pick.is_some() {
                break;
            }
        }
        match pick {
            Some(gi) => {
                used[gi] = true;
                if pool[gi].1 == Role::Counted {
                    t.tp += 1;
                }
            }
            None => {
                let dont_care = regions.iter().any(|r| covered(&d.bbox, r) >= cfg.iou_threshold);
                let too_small = d.bbox[3] - d.bbox[1] < min_h;
                if !dont_care && !too_small {
                    t.fp += 1;
                }
            }
        }
    }
    t
}

fn counted_gt(gt: &[ObjectLabel], cfg: &EvalConfig) -> usize {
    let (min_h, max_occ, max_trunc) = thresholds(cfg.difficulty);
    gt.iter()
        .filter(|g| {
            g.class == cfg.class
                && g.bbox[3] - g.bbox[1] >= min_h
                && g.occlusion <= max_occ
                && g.truncation <= max_trunc
        })
        .count()
}

/// `(ground truth, detections)` per image. `None` when no ground truth counts.
pub fn brute_force_ap(frames: &[(Vec<ObjectLabel>, Vec<ObjectLabel>)], cfg: &EvalConfig) -> Option<f64> {
    let n: usize = frames.iter().map(|(g, _)| counted_gt(g, cfg)).sum();
    if n == 0 {
        return None;
    }
    let mut cuts: Vec<f64> = frames
        .iter()
        .flat_map(|(_, d)| d.iter())
        .filter(|d| d.class == cfg.class)
        .map(|d| d.score.unwrap())
        .collect();
    cuts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    cuts.dedup();

    let mut points: Vec<(usize, usize)> = Vec::new();
    for &cut in &cuts {
        let (mut tp, mut fp) = (0, 0);
        for (g, d) in frames {
            let t = tally_image(g, d, cfg, cut);
            tp += t.tp;
            fp += t.fp;
        }
        if tp + fp > 0 {
            points.push((tp, fp));
        }
    }
    let mut sum = 0.0;
    for k in 1..=40usize {
        let mut best = 0.0_f64;
        for &(tp, fp) in &points {
            if tp * 40 >= k * n {
                best = best.max(tp as f64 / (tp + fp) as f64);
            }
        }
        sum += best;
    }
    Some(sum / 40.0 * 100.0)
}
