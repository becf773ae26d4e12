//! KITTI-style average precision over 40 recall positions.
//!
//! Per class, difficulty and overlap metric:
//! 1. ground truth of the class that passes the difficulty filter is *valid*;
//!    failing ground truth and neighbour classes (e.g. `Van` for `Car`) are
//!    *ignored*; `DontCare` rows become 2D "don't care" regions;
//! 2. within each image, detections are visited by descending score and
//!    greedily matched to the unmatched ground truth of highest IoU at or
//!    above the threshold, valid boxes taking precedence over ignored ones;
//! 3. unmatched detections are false positives unless they fall in a
//!    don't-care region or are shorter than the difficulty's minimum height;
//! 4. precision/recall are taken at every score cutoff and AP is the mean,
//!    over recalls `k/40`, of the best precision reached at recall `≥ k/40`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou_3d, iou_bev, Box3D};
use crate::kitti_io::ObjectLabel;

pub const RECALL_POSITIONS: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];

    pub fn filter(self) -> DifficultyFilter {
        match self {
            Difficulty::Easy => DifficultyFilter {
                min_height: 40.0,
                max_occlusion: 0,
                max_truncation: 0.15,
            },
            Difficulty::Moderate => DifficultyFilter {
                min_height: 25.0,
                max_occlusion: 1,
                max_truncation: 0.30,
            },
            Difficulty::Hard => DifficultyFilter {
                min_height: 25.0,
                max_occlusion: 2,
                max_truncation: 0.50,
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "Easy",
            Difficulty::Moderate => "Moderate",
            Difficulty::Hard => "Hard",
        }
    }
}

impl std::str::FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(Difficulty::Easy),
            "moderate" | "mod" | "mod." => Ok(Difficulty::Moderate),
            "hard" => Ok(Difficulty::Hard),
            _ => Err(Error::Parameter(format!("unknown difficulty {s:?}"))),
        }
    }
}

/// KITTI devkit thresholds on 2D box height (px), occlusion and truncation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifficultyFilter {
    pub min_height: f64,
    pub max_occlusion: i32,
    pub max_truncation: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GtStatus {
    Valid,
    Ignored,
}

/// Difficulty bucketing for one ground-truth row (class is not checked here,
/// except that `DontCare` is never valid).
pub fn assign_difficulty(gt: &ObjectLabel, filter: &DifficultyFilter) -> GtStatus {
    let ok = !gt.is_dont_care()
        && gt.bbox_height() >= filter.min_height
        && gt.occlusion <= filter.max_occlusion
        && gt.truncation <= filter.max_truncation;
    if ok {
        GtStatus::Valid
    } else {
        GtStatus::Ignored
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    /// Rotated bird's-eye-view IoU.
    Bev,
    /// Volumetric IoU.
    ThreeD,
}

impl Metric {
    pub fn iou(self, a: &Box3D, b: &Box3D) -> f64 {
        match self {
            Metric::Bev => iou_bev(a, b),
            Metric::ThreeD => iou_3d(a, b),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Bev => "BEV",
            Metric::ThreeD => "3D",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruth {
    pub box3d: Box3D,
    pub ignored: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub box3d: Box3D,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// Matched the valid ground truth at this index.
    TruePositive(usize),
    /// Matched the ignored ground truth at this index; counts as neither TP nor FP.
    MatchedIgnored(usize),
    Unmatched,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    /// Per detection, in input order.
    pub outcomes: Vec<Outcome>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Detection indices by descending score; ties keep input order.
pub fn score_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Greedy one-to-one matching within one image.
///
/// Every unmatched detection is tallied as a false positive here; callers that
/// discard some of them (don't-care regions, too-small boxes) adjust afterwards.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_fn: impl Fn(&Box3D, &Box3D) -> f64,
    threshold: f64,
) -> MatchResult {
    let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    let mut taken = vec![false; gts.len()];
    let mut outcomes = vec![Outcome::Unmatched; dets.len()];
    for di in score_order(&scores) {
        let mut best_valid: Option<(usize, f64)> = None;
        let mut best_ignored: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if taken[gi] {
                continue;
            }
            let iou = iou_fn(&dets[di].box3d, &gt.box3d);
            if iou < threshold {
                continue;
            }
            let slot = if gt.ignored { &mut best_ignored } else { &mut best_valid };
            if slot.is_none_or(|(_, best)| iou > best) {
                *slot = Some((gi, iou));
            }
        }
        outcomes[di] = match (best_valid, best_ignored) {
            (Some((gi, _)), _) => {
                taken[gi] = true;
                Outcome::TruePositive(gi)
            }
            (None, Some((gi, _))) => {
                taken[gi] = true;
                Outcome::MatchedIgnored(gi)
            }
            (None, None) => Outcome::Unmatched,
        };
    }
    let true_positives = outcomes
        .iter()
        .filter(|o| matches!(o, Outcome::TruePositive(_)))
        .count();
    let false_positives = outcomes.iter().filter(|o| **o == Outcome::Unmatched).count();
    let valid = gts.iter().filter(|g| !g.ignored).count();
    MatchResult {
        outcomes,
        true_positives,
        false_positives,
        false_negatives: valid - true_positives,
    }
}

/// Which classes count against which during evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub class: String,
    pub difficulty: Difficulty,
    pub metric: Metric,
    pub iou_threshold: f64,
    /// Ground-truth classes that are ignored rather than missed (e.g. `Van` for `Car`).
    pub ignore_classes: Vec<String>,
}

/// Default IoU threshold per class; the flag is `true` when the value is an
/// assumption rather than the 0.7 Car protocol.
pub fn default_iou_threshold(class: &str) -> (f64, bool) {
    match class {
        "Car" => (0.7, false),
        _ => (0.5, true),
    }
}

pub fn default_ignore_classes(class: &str) -> Vec<String> {
    match class {
        "Car" => vec!["Van".into()],
        "Pedestrian" => vec!["Person_sitting".into()],
        _ => Vec::new(),
    }
}

impl EvalConfig {
    pub fn for_class(class: &str, difficulty: Difficulty, metric: Metric) -> Self {
        Self {
            class: class.to_string(),
            difficulty,
            metric,
            iou_threshold: default_iou_threshold(class).0,
            ignore_classes: default_ignore_classes(class),
        }
    }
}

/// Ground truth and detections for one image.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Frame {
    pub ground_truth: Vec<ObjectLabel>,
    pub detections: Vec<ObjectLabel>,
}

/// Fraction of `det`'s 2D box covered by `region`.
pub fn box2d_coverage(det: &[f64; 4], region: &[f64; 4]) -> f64 {
    let iw = det[2].min(region[2]) - det[0].max(region[0]);
    let ih = det[3].min(region[3]) - det[1].max(region[1]);
    let area = (det[2] - det[0]) * (det[3] - det[1]);
    if iw <= 0.0 || ih <= 0.0 || area <= 0.0 {
        return 0.0;
    }
    iw * ih / area
}

/// Per-detection verdict after matching and discarding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    TruePositive,
    FalsePositive,
    Discarded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameOutcome {
    /// `(score, verdict)` for each detection of the evaluated class, input order.
    pub detections: Vec<(f64, Verdict)>,
    pub valid_gt: usize,
}

pub fn evaluate_frame(frame: &Frame, cfg: &EvalConfig) -> Result<FrameOutcome> {
    let filter = cfg.difficulty.filter();
    let mut gts = Vec::new();
    let mut dont_care = Vec::new();
    for g in &frame.ground_truth {
        if g.is_dont_care() {
            dont_care.push(g.bbox);
        } else if g.class == cfg.class {
            gts.push(GroundTruth {
                box3d: g.box3d(),
                ignored: assign_difficulty(g, &filter) == GtStatus::Ignored,
            });
        } else if cfg.ignore_classes.contains(&g.class) {
            gts.push(GroundTruth {
                box3d: g.box3d(),
                ignored: true,
            });
        }
    }
    let det_labels: Vec<&ObjectLabel> = frame
        .detections
        .iter()
        .filter(|d| d.class == cfg.class)
        .collect();
    let dets = det_labels
        .iter()
        .map(|d| {
            d.score
                .map(|score| Detection {
                    box3d: d.box3d(),
                    score,
                })
                .ok_or_else(|| Error::Contract(format!("{} detection without a score", d.class)))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = match_detections(&dets, &gts, |a, b| cfg.metric.iou(a, b), cfg.iou_threshold);
    let detections = det_labels
        .iter()
        .zip(&dets)
        .zip(&m.outcomes)
        .map(|((label, det), outcome)| {
            let verdict = match outcome {
                Outcome::TruePositive(_) => Verdict::TruePositive,
                Outcome::MatchedIgnored(_) => Verdict::Discarded,
                Outcome::Unmatched => {
                    let in_dont_care = dont_care
                        .iter()
                        .any(|r| box2d_coverage(&label.bbox, r) >= cfg.iou_threshold);
                    if in_dont_care || label.bbox_height() < filter.min_height {
                        Verdict::Discarded
                    } else {
                        Verdict::FalsePositive
                    }
                }
            };
            (det.score, verdict)
        })
        .collect();
    Ok(FrameOutcome {
        detections,
        valid_gt: gts.iter().filter(|g| !g.ignored).count(),
    })
}

/// Precision at recalls `1/40, 2/40, …, 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    /// Average precision in percent.
    pub ap: f64,
    pub curve: PrCurve,
    pub valid_gt: usize,
    /// Tallies with every detection kept.
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Right-max interpolated AP@40 from `(tp, fp)` tallies at each score cutoff.
///
/// A cutoff reaches recall position `k` when `tp · 40 ≥ k · n_valid`; integer
/// arithmetic keeps the comparison exact.
pub fn interpolated_ap(cutoffs: &[(usize, usize)], valid_gt: usize) -> Result<(f64, PrCurve)> {
    if valid_gt == 0 {
        return Err(Error::Undefined("no valid ground truth".into()));
    }
    let mut recall = Vec::with_capacity(RECALL_POSITIONS);
    let mut precision = Vec::with_capacity(RECALL_POSITIONS);
    for k in 1..=RECALL_POSITIONS {
        let best = cutoffs
            .iter()
            .filter(|&&(tp, _)| tp * RECALL_POSITIONS >= k * valid_gt)
            .map(|&(tp, fp)| tp as f64 / (tp + fp) as f64)
            .fold(0.0, f64::max);
        recall.push(k as f64 / RECALL_POSITIONS as f64);
        precision.push(best);
    }
    let ap = precision.iter().sum::<f64>() / RECALL_POSITIONS as f64 * 100.0;
    Ok((ap, PrCurve { recall, precision }))
}

/// AP@40 over a dataset for one class / difficulty / metric.
pub fn average_precision(frames: &[Frame], cfg: &EvalConfig) -> Result<ApResult> {
    let mut scored = Vec::new();
    let mut valid_gt = 0;
    for frame in frames {
        let out = evaluate_frame(frame, cfg)?;
        valid_gt += out.valid_gt;
        scored.extend(
            out.detections
                .into_iter()
                .filter(|(_, v)| *v != Verdict::Discarded),
        );
    }
    if valid_gt == 0 {
        return Err(Error::Undefined(format!(
            "no valid {} ground truth at {} difficulty",
            cfg.class,
            cfg.difficulty.name()
        )));
    }
    let scores: Vec<f64> = scored.iter().map(|(s, _)| *s).collect();
    let order = score_order(&scores);
    let mut cutoffs = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (rank, &i) in order.iter().enumerate() {
        match scored[i].1 {
            Verdict::TruePositive => tp += 1,
            _ => fp += 1,
        }
        let group_ends = order
            .get(rank + 1)
            .is_none_or(|&next| scores[next] != scores[i]);
        if group_ends {
            cutoffs.push((tp, fp));
        }
    }
    let (ap, curve) = interpolated_ap(&cutoffs, valid_gt)?;
    Ok(ApResult {
        ap,
        curve,
        valid_gt,
        true_positives: tp,
        false_positives: fp,
        false_negatives: valid_gt - tp,
    })
}
