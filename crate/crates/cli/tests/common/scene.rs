//! The committed synthetic street scene and evaluation fixture, regenerated
//! bit-for-bit by `cargo run --example make_fixtures`.

use std::collections::BTreeMap;
use std::path::Path;

use adisep_core::adis::DepthMap;
use adisep_core::eval::{Difficulty, EvalConfig, Metric};
use adisep_core::kitti_io::{format_label_line, parse_label_file, write_depth_png, write_result_file, ObjectLabel};

use super::ap_oracle::brute_force_ap;
use super::datasets::{random_dataset, Dataset};

pub const WIDTH: usize = 400;
pub const HEIGHT: usize = 120;
const FOCAL: f64 = 360.0;
const CX: f64 = 200.0;
const CY: f64 = 40.0;
const CAMERA_HEIGHT: f64 = 1.65;

pub fn calib_text() -> String {
    let p2 = [FOCAL, 0.0, CX, 16.0, 0.0, FOCAL, CY, 0.0, 0.0, 0.0, 1.0, 0.0];
    let row: Vec<String> = p2.iter().map(|v| format!("{v:e}")).collect();
    format!("P0: {0}\nP1: {0}\nP2: {1}\nP3: {0}\n", row.join(" "), row.join(" "))
}

/// Road plane below the horizon, a wall of buildings, four box-shaped
/// vehicles at 7 to 45 m, no returns in the sky and a sparse hole pattern.
pub fn depth() -> DepthMap {
    // (left, right, top, bottom, depth)
    let vehicles = [
        (30usize, 120usize, 60usize, 112usize, 7.25),
        (230, 290, 48, 76, 16.5),
        (150, 185, 43, 58, 31.0),
        (320, 345, 41, 50, 45.75),
    ];
    let mut d = vec![0.0; WIDTH * HEIGHT];
    for y in 0..HEIGHT {
        for x in 0..WIDTH {
            let i = y * WIDTH + x;
            let v = y as f64 + 0.5;
            if (x * 7 + y * 13) % 23 == 0 {
                continue;
            }
            let mut z = if v > CY + 1.0 {
                (FOCAL * CAMERA_HEIGHT / (v - CY)).min(70.0)
            } else if y >= 12 && (x / 40) % 3 != 2 {
                // facades: depth varies slowly along the street
                60.0 + 25.0 * ((x as f64) / WIDTH as f64)
            } else {
                0.0
            };
            for &(l, r, t, b, vz) in &vehicles {
                if (l..r).contains(&x) && (t..b).contains(&y) {
                    z = vz + 0.02 * (x - l) as f64;
                }
            }
            d[i] = z;
        }
    }
    // round to the PNG grid so the committed file is an exact copy
    let q: Vec<f64> = d.iter().map(|&z| (z * 256.0).round() / 256.0).collect();
    DepthMap::from_depths(HEIGHT, WIDTH, q).expect("scene is valid")
}

pub const EVAL_SEEDS: [u64; 4] = [3, 17, 29, 41];

/// Concatenated random mini-datasets, one image per entry.
pub fn eval_dataset() -> Dataset {
    EVAL_SEEDS.iter().flat_map(|&s| random_dataset(s)).collect()
}

pub fn label_text(labels: &[ObjectLabel]) -> String {
    labels.iter().map(|l| format_label_line(l) + "\n").collect()
}

pub fn stem(i: usize) -> String {
    format!("{i:06}")
}

/// Labels and results as they read back from disk, so the oracle sees the
/// same quantised values as the CLI.
pub fn eval_dataset_on_disk() -> Dataset {
    eval_dataset()
        .iter()
        .map(|(g, d)| {
            let g = parse_label_file(&label_text(g)).unwrap();
            let d = parse_label_file(&write_result_file(d).unwrap()).unwrap();
            (g, d)
        })
        .collect()
}

pub const CLASSES: [&str; 3] = ["Car", "Pedestrian", "Cyclist"];

fn metric_key(m: Metric) -> &'static str {
    match m {
        Metric::ThreeD => "3d",
        Metric::Bev => "bev",
    }
}

pub fn cell_key(class: &str, d: Difficulty, m: Metric) -> String {
    format!("{class}/{}/{}", d.name().to_lowercase(), metric_key(m))
}

/// Oracle AP for every cell; `None` where no valid ground truth exists.
pub fn expected_ap() -> BTreeMap<String, Option<f64>> {
    let ds = eval_dataset_on_disk();
    let mut out = BTreeMap::new();
    for class in CLASSES {
        for d in Difficulty::ALL {
            for m in [Metric::ThreeD, Metric::Bev] {
                out.insert(cell_key(class, d, m), brute_force_ap(&ds, &EvalConfig::for_class(class, d, m)));
            }
        }
    }
    out
}

/// Every committed fixture file, as `(relative path, bytes)`.
pub fn files() -> Vec<(String, Vec<u8>)> {
    let mut out = vec![
        ("scene/depth.png".to_string(), write_depth_png(&depth()).unwrap()),
        ("scene/calib.txt".to_string(), calib_text().into_bytes()),
    ];
    for (i, (g, d)) in eval_dataset().iter().enumerate() {
        out.push((format!("eval/labels/{}.txt", stem(i)), label_text(g).into_bytes()));
        if !d.is_empty() {
            out.push((format!("eval/results/{}.txt", stem(i)), write_result_file(d).unwrap().into_bytes()));
        }
    }
    let json = serde_json::to_string_pretty(&expected_ap()).unwrap() + "\n";
    out.push(("eval/expected_ap.json".to_string(), json.into_bytes()));
    out
}

pub fn write_all(root: &Path) -> std::io::Result<()> {
    for (rel, bytes) in files() {
        let path = root.join(rel);
        std::fs::create_dir_all(path.parent().unwrap())?;
        std::fs::write(path, bytes)?;
    }
    Ok(())
}
