//! On-disk dataset layout.
//!
//! ```text
//! root/
//!   board.json              rows, cols, spacing_m
//!   robot_poses.csv         j,x,y,z,qx,qy,qz,qw
//!   cam<k>/intrinsics.json  fx, fy, cx, cy, dist[5], width, height
//!   cam<k>/corners_<j>.txt  L lines "u v"; absent when not detected
//!   ground_truth.json       optional: hand_eye[N], board_to_ee (7 numbers each)
//! ```
//!
//! Every floating-point value is written rounded to 12 significant digits.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::board::BoardModel;
use crate::camera::CameraIntrinsics;
use crate::dataset::{Dataset, DatasetError, Detection};
use crate::geom::Pose;
use crate::metrics::GroundTruth;
use crate::real::{to_f64, Real};

pub const BOARD_FILE: &str = "board.json";
pub const ROBOT_POSES_FILE: &str = "robot_poses.csv";
pub const INTRINSICS_FILE: &str = "intrinsics.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
const POSE_HEADER: [&str; 8] = ["j", "x", "y", "z", "qx", "qy", "qz", "qw"];

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Shortest decimal string of `round12(x)`.
pub fn fmt12(x: f64) -> String {
    format!("{}", round12(x))
}

pub fn pose_to_record<T: Real>(p: &Pose<T>) -> [f64; 7] {
    p.to_array7().map(|x| round12(to_f64(x)))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), DatasetError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn read_file(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn to_json_pretty<S: Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D, DatasetError> {
    let text = read_file(path)?;
    serde_json::from_str(&text)
        .map_err(|e| DatasetError::format(path, Some(e.line()), e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct BoardRecord {
    rows: usize,
    cols: usize,
    spacing_m: f64,
}

#[derive(Serialize, Deserialize)]
struct IntrinsicsRecord {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    dist: [f64; 5],
    width: u32,
    height: u32,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthRecord {
    hand_eye: Vec<[f64; 7]>,
    board_to_ee: [f64; 7],
}

fn camera_dir(root: &Path, k: usize) -> PathBuf {
    root.join(format!("cam{k}"))
}

fn corners_file(root: &Path, k: usize, j: usize) -> PathBuf {
    camera_dir(root, k).join(format!("corners_{j}.txt"))
}

pub fn save_dataset<T: Real>(d: &Dataset<T>, root: impl AsRef<Path>) -> Result<(), DatasetError> {
    let root = root.as_ref();
    fs::create_dir_all(root).map_err(io_err(root))?;

    let board = BoardRecord {
        rows: d.board().rows,
        cols: d.board().cols,
        spacing_m: round12(to_f64(d.board().spacing)),
    };
    write_file(&root.join(BOARD_FILE), &to_json_pretty(&board))?;

    let mut csv = POSE_HEADER.join(",");
    csv.push('\n');
    for (j, p) in d.robot_poses().iter().enumerate() {
        let rec = pose_to_record(p);
        let fields: Vec<String> = rec.iter().map(|&x| fmt12(x)).collect();
        csv.push_str(&format!("{j},{}\n", fields.join(",")));
    }
    write_file(&root.join(ROBOT_POSES_FILE), &csv)?;

    for (k, c) in d.cameras().iter().enumerate() {
        let dir = camera_dir(root, k);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        // Stale corner files from an earlier save would read back as detections.
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            let name = entry.file_name();
            if parse_corner_file_name(&name.to_string_lossy()).is_some() {
                fs::remove_file(entry.path()).map_err(io_err(&entry.path()))?;
            }
        }
        let rec = IntrinsicsRecord {
            fx: round12(to_f64(c.fx)),
            fy: round12(to_f64(c.fy)),
            cx: round12(to_f64(c.cx)),
            cy: round12(to_f64(c.cy)),
            dist: c.dist.map(|x| round12(to_f64(x))),
            width: c.width,
            height: c.height,
        };
        write_file(&dir.join(INTRINSICS_FILE), &to_json_pretty(&rec))?;
    }

    for (j, k, corners) in d.detections() {
        let mut text = String::new();
        for c in corners {
            text.push_str(&format!("{} {}\n", fmt12(to_f64(c.x)), fmt12(to_f64(c.y))));
        }
        write_file(&corners_file(root, k, j), &text)?;
    }
    Ok(())
}

fn parse_corner_file_name(name: &str) -> Option<usize> {
    name.strip_prefix("corners_")?
        .strip_suffix(".txt")?
        .parse()
        .ok()
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64, DatasetError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| DatasetError::format(path, Some(line), format!("not a number: {field:?}")))?;
    if !v.is_finite() {
        return Err(DatasetError::format(path, Some(line), "non-finite value"));
    }
    Ok(v)
}

fn load_robot_poses(path: &Path) -> Result<Vec<Pose<f64>>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DatasetError::format(path, None, e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| DatasetError::format(path, Some(1), e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != POSE_HEADER {
        return Err(DatasetError::format(
            path,
            Some(1),
            format!("expected header {:?}", POSE_HEADER.join(",")),
        ));
    }
    let mut poses = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| DatasetError::format(path, Some(line), e.to_string()))?;
        if rec.len() != 8 {
            return Err(DatasetError::format(path, Some(line), "expected 8 fields"));
        }
        let j: usize = rec[0]
            .parse()
            .map_err(|_| DatasetError::format(path, Some(line), "pose index must be a non-negative integer"))?;
        let mut a = [0.0; 7];
        for (slot, field) in a.iter_mut().zip(rec.iter().skip(1)) {
            *slot = parse_f64(path, line, field)?;
        }
        let pose = Pose::from_array7(&a).map_err(|e| {
            DatasetError::Validation(format!("{}:{line}: {e}", path.display()))
        })?;
        if poses.insert(j, pose).is_some() {
            return Err(DatasetError::format(path, Some(line), format!("duplicate pose index {j}")));
        }
    }
    let m = poses.len();
    if let Some((&last, _)) = poses.iter().next_back() {
        if last + 1 != m {
            return Err(DatasetError::format(
                path,
                None,
                format!("pose indices must be exactly 0..{m}"),
            ));
        }
    }
    Ok(poses.into_values().collect())
}

fn load_corners(path: &Path, expected: usize) -> Result<Vec<Vector2<f64>>, DatasetError> {
    let text = read_file(path)?;
    let mut corners = Vec::with_capacity(expected);
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(DatasetError::format(path, Some(line_no), "expected \"u v\""));
        }
        corners.push(Vector2::new(
            parse_f64(path, line_no, fields[0])?,
            parse_f64(path, line_no, fields[1])?,
        ));
    }
    if corners.len() != expected {
        return Err(DatasetError::format(
            path,
            None,
            format!("found {} corners, board has {expected}", corners.len()),
        ));
    }
    Ok(corners)
}

fn camera_count(root: &Path) -> Result<usize, DatasetError> {
    let mut indices = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        if !entry.path().is_dir() {
            continue;
        }
        let name = entry.file_name();
        if let Some(k) = name
            .to_string_lossy()
            .strip_prefix("cam")
            .and_then(|s| s.parse::<usize>().ok())
        {
            indices.push(k);
        }
    }
    indices.sort_unstable();
    for (expected, &k) in indices.iter().enumerate() {
        if k != expected {
            return Err(DatasetError::format(
                root,
                None,
                format!("camera directories must be cam0..cam{}, missing cam{expected}", indices.len() - 1),
            ));
        }
    }
    if indices.is_empty() {
        return Err(DatasetError::format(root, None, "no cam<k> directories"));
    }
    Ok(indices.len())
}

pub fn load_dataset(root: impl AsRef<Path>) -> Result<Dataset<f64>, DatasetError> {
    let root = root.as_ref();
    let board_path = root.join(BOARD_FILE);
    let b: BoardRecord = read_json(&board_path)?;
    let board = BoardModel::new(b.rows, b.cols, b.spacing_m)
        .map_err(|e| DatasetError::format(&board_path, None, e.to_string()))?;
    let robot_poses = load_robot_poses(&root.join(ROBOT_POSES_FILE))?;
    let m = robot_poses.len();

    let n = camera_count(root)?;
    let mut cameras = Vec::with_capacity(n);
    let mut detections = Vec::new();
    for k in 0..n {
        let dir = camera_dir(root, k);
        let ipath = dir.join(INTRINSICS_FILE);
        let r: IntrinsicsRecord = read_json(&ipath)?;
        let intr = CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.dist, r.width, r.height)
            .map_err(|e| DatasetError::format(&ipath, None, e.to_string()))?;
        cameras.push(intr);

        let mut files: Vec<(usize, PathBuf)> = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            if let Some(j) = parse_corner_file_name(&entry.file_name().to_string_lossy()) {
                files.push((j, entry.path()));
            }
        }
        files.sort();
        for (j, path) in files {
            if j >= m {
                return Err(DatasetError::format(
                    &path,
                    None,
                    format!("pose index {j} not in {ROBOT_POSES_FILE} (M = {m})"),
                ));
            }
            detections.push(Detection {
                pose_index: j,
                camera_index: k,
                corners: load_corners(&path, board.corner_count())?,
            });
        }
    }
    Dataset::new(cameras, board, robot_poses, detections)
}

pub fn save_ground_truth<T: Real>(gt: &GroundTruth<T>, root: impl AsRef<Path>) -> Result<(), DatasetError> {
    let rec = GroundTruthRecord {
        hand_eye: gt.hand_eye.iter().map(pose_to_record).collect(),
        board_to_ee: pose_to_record(&gt.board_to_ee),
    };
    let path = root.as_ref().join(GROUND_TRUTH_FILE);
    write_file(&path, &to_json_pretty(&rec))
}

/// Reads `ground_truth.json` if present.
pub fn load_ground_truth(root: impl AsRef<Path>) -> Result<Option<GroundTruth<f64>>, DatasetError> {
    let path = root.as_ref().join(GROUND_TRUTH_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let rec: GroundTruthRecord = read_json(&path)?;
    let pose = |a: &[f64; 7]| {
        Pose::from_array7(a).map_err(|e| DatasetError::Validation(format!("{}: {e}", path.display())))
    };
    Ok(Some(GroundTruth {
        hand_eye: rec.hand_eye.iter().map(pose).collect::<Result<_, _>>()?,
        board_to_ee: pose(&rec.board_to_ee)?,
    }))
}
