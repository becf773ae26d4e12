//! `adisep eval`: AP@40 for 3D and BEV over a KITTI-style results/labels pair.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use adisep_core::eval::{average_precision, Difficulty, EvalConfig, Frame, Metric};
use adisep_core::kitti_io::{parse_label_file, ObjectLabel};
use adisep_core::Error as CoreError;
use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Config;

#[derive(Debug, Serialize)]
pub struct Cell {
    pub difficulty: Difficulty,
    pub metric: Metric,
    /// `None` when the cell has no valid ground truth.
    pub ap: Option<f64>,
    pub valid_gt: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct ClassReport {
    pub class: String,
    pub iou_threshold: f64,
    pub threshold_assumed: bool,
    pub cells: Vec<Cell>,
}

impl ClassReport {
    fn cell(&self, d: Difficulty, m: Metric) -> Option<&Cell> {
        self.cells.iter().find(|c| c.difficulty == d && c.metric == m)
    }
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub images: usize,
    pub classes: Vec<ClassReport>,
}

impl EvalReport {
    pub fn all_undefined(&self) -> bool {
        self.classes.iter().flat_map(|c| &c.cells).all(|c| c.ap.is_none())
    }
}

fn short(d: Difficulty) -> &'static str {
    match d {
        Difficulty::Easy => "Easy",
        Difficulty::Moderate => "Mod.",
        Difficulty::Hard => "Hard",
    }
}

fn fmt_ap(cell: Option<&Cell>) -> String {
    match cell.and_then(|c| c.ap) {
        Some(ap) => format!("{ap:.2}"),
        None => "n/a".into(),
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let diffs: Vec<Difficulty> = {
            let set: BTreeSet<Difficulty> = self.classes.iter().flat_map(|c| c.cells.iter().map(|x| x.difficulty)).collect();
            set.into_iter().collect()
        };
        writeln!(f, "images: {}", self.images)?;
        write!(f, "{:<12} {:>5}", "class", "IoU")?;
        for m in [Metric::ThreeD, Metric::Bev] {
            for d in &diffs {
                write!(f, " {:>10}", format!("{} {}", m.name(), short(*d)))?;
            }
        }
        writeln!(f)?;
        for c in &self.classes {
            let t = format!("{:.2}{}", c.iou_threshold, if c.threshold_assumed { "*" } else { "" });
            write!(f, "{:<12} {:>5}", c.class, t)?;
            for m in [Metric::ThreeD, Metric::Bev] {
                for &d in &diffs {
                    write!(f, " {:>10}", fmt_ap(c.cell(d, m)))?;
                }
            }
            writeln!(f)?;
        }
        if self.classes.iter().any(|c| c.threshold_assumed) {
            writeln!(f, "* assumed threshold (no protocol value for this class)")?;
        }
        writeln!(f)?;
        writeln!(f, "{:<12} {:<10} {:<4} {:>6} {:>6} {:>6} {:>6}", "class", "difficulty", "iou", "gt", "tp", "fp", "fn")?;
        for c in &self.classes {
            for cell in &c.cells {
                writeln!(
                    f,
                    "{:<12} {:<10} {:<4} {:>6} {:>6} {:>6} {:>6}",
                    c.class,
                    cell.difficulty.name(),
                    cell.metric.name(),
                    cell.valid_gt,
                    cell.true_positives,
                    cell.false_positives,
                    cell.false_negatives
                )?;
            }
        }
        write!(f, "AP uses 40 recall positions, in percent")
    }
}

fn txt_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            out.push((stem, path));
        }
    }
    out.sort();
    Ok(out)
}

fn read_labels(path: &Path) -> Result<Vec<ObjectLabel>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_label_file(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Loads frames sorted by stem. A labels stem without a results file counts as
/// an image with no detections; a results stem without labels is an error.
pub fn load_frames(results: &Path, labels: &Path) -> Result<Vec<(String, Frame)>> {
    let label_files = txt_files(labels)?;
    let result_files = txt_files(results)?;
    let known: BTreeSet<&str> = label_files.iter().map(|(s, _)| s.as_str()).collect();
    let orphans: Vec<&str> = result_files.iter().map(|(s, _)| s.as_str()).filter(|s| !known.contains(s)).collect();
    if !orphans.is_empty() {
        bail!("result files without matching labels: {}", orphans.join(", "));
    }
    let frames: Result<Vec<(String, Frame)>> = label_files
        .par_iter()
        .map(|(stem, lpath)| {
            let ground_truth = read_labels(lpath)?;
            let rpath = results.join(format!("{stem}.txt"));
            let detections = if rpath.is_file() { read_labels(&rpath)? } else { Vec::new() };
            if let Some(d) = detections.iter().find(|d| d.score.is_none()) {
                bail!("{}: detection of class {} has no score", rpath.display(), d.class);
            }
            Ok((stem.clone(), Frame { ground_truth, detections }))
        })
        .collect();
    frames
}

pub fn evaluate(cfg: &Config, frames: &[Frame], only_class: Option<&str>) -> Result<EvalReport> {
    let classes: Vec<&str> = match only_class {
        Some(c) => vec![c],
        None => cfg.classes.iter().map(String::as_str).collect(),
    };
    let mut reports = Vec::new();
    for class in classes {
        let (threshold, assumed) = cfg.iou_threshold(class);
        let jobs: Vec<(Difficulty, Metric)> = cfg
            .difficulties
            .iter()
            .flat_map(|&d| [Metric::ThreeD, Metric::Bev].map(|m| (d, m)))
            .collect();
        let cells: Result<Vec<Cell>> = jobs
            .par_iter()
            .map(|&(difficulty, metric)| {
                let mut ec = EvalConfig::for_class(class, difficulty, metric);
                ec.iou_threshold = threshold;
                match average_precision(frames, &ec) {
                    Ok(r) => Ok(Cell {
                        difficulty,
                        metric,
                        ap: Some(r.ap),
                        valid_gt: r.valid_gt,
                        true_positives: r.true_positives,
                        false_positives: r.false_positives,
                        false_negatives: r.false_negatives,
                        note: None,
                    }),
                    Err(CoreError::Undefined(msg)) => {
                        Ok(Cell {
                            difficulty,
                            metric,
                            ap: None,
                            valid_gt: 0,
                            true_positives: 0,
                            false_positives: 0,
                            false_negatives: 0,
                            note: Some(msg),
                        })
                    }
                    Err(e) => Err(e.into()),
                }
            })
            .collect();
        reports.push(ClassReport {
            class: class.to_string(),
            iou_threshold: threshold,
            threshold_assumed: assumed,
            cells: cells?,
        });
    }
    Ok(EvalReport {
        images: frames.len(),
        classes: reports,
    })
}

pub fn run(cfg: &Config, results: &Path, labels: &Path, class: Option<&str>) -> Result<EvalReport> {
    let frames: Vec<Frame> = load_frames(results, labels)?.into_iter().map(|(_, f)| f).collect();
    if frames.is_empty() {
        bail!("no label files found in {}", labels.display());
    }
    let report = evaluate(cfg, &frames, class)?;
    if report.all_undefined() {
        bail!("no valid ground truth for any requested class/difficulty; AP is undefined");
    }
    Ok(report)
}
