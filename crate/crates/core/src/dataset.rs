//! Calibration dataset: cameras, board, robot poses and sparse corner
//! detections, plus the per-pose cross-detection matrices.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use nalgebra::Vector2;
use thiserror::Error;

use crate::board::BoardModel;
use crate::camera::CameraIntrinsics;
use crate::geom::Pose;
use crate::real::Real;

/// Minimum detections per camera for a solvable hand-eye problem.
pub const MIN_DETECTIONS_PER_CAMERA: usize = 3;
/// Minimum number of robot poses.
pub const MIN_POSES: usize = 3;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}{}: {msg}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Format {
        path: PathBuf,
        line: Option<usize>,
        msg: String,
    },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
}

impl DatasetError {
    pub(crate) fn format(path: impl Into<PathBuf>, line: Option<usize>, msg: impl Into<String>) -> Self {
        DatasetError::Format {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

/// Detected board corners of camera `camera_index` at robot pose `pose_index`,
/// in board row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection<T: Real> {
    pub pose_index: usize,
    pub camera_index: usize,
    pub corners: Vec<Vector2<T>>,
}

/// End-effector pose in the robot base frame, `[T_E^W]_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobotPose<T: Real> {
    pub pose_index: usize,
    pub transform: Pose<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T: Real> {
    cameras: Vec<CameraIntrinsics<T>>,
    board: BoardModel<T>,
    robot_poses: Vec<Pose<T>>,
    // keyed by (pose j, camera k)
    detections: BTreeMap<(usize, usize), Vec<Vector2<T>>>,
}

impl<T: Real> Dataset<T> {
    /// Builds and validates a dataset. `robot_poses[j]` is pose `j`.
    pub fn new(
        cameras: Vec<CameraIntrinsics<T>>,
        board: BoardModel<T>,
        robot_poses: Vec<Pose<T>>,
        detections: impl IntoIterator<Item = Detection<T>>,
    ) -> Result<Self, DatasetError> {
        let mut map = BTreeMap::new();
        for d in detections {
            if map.insert((d.pose_index, d.camera_index), d.corners).is_some() {
                return Err(DatasetError::Validation(format!(
                    "duplicate detection for pose {} camera {}",
                    d.pose_index, d.camera_index
                )));
            }
        }
        let ds = Self {
            cameras,
            board,
            robot_poses,
            detections: map,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<(), DatasetError> {
        let v = |m: String| Err(DatasetError::Validation(m));
        self.board.validate().map_err(|e| DatasetError::Validation(e.to_string()))?;
        if self.cameras.is_empty() {
            return v("dataset has no cameras".into());
        }
        for (k, c) in self.cameras.iter().enumerate() {
            c.validate()
                .map_err(|e| DatasetError::Validation(format!("camera {k}: {e}")))?;
        }
        let m = self.robot_poses.len();
        if m < MIN_POSES {
            return v(format!("need at least {MIN_POSES} robot poses, got {m}"));
        }
        for (j, p) in self.robot_poses.iter().enumerate() {
            if !p.is_finite() {
                return v(format!("robot pose {j} is not finite"));
            }
        }
        let l = self.board.corner_count();
        let n = self.cameras.len();
        let mut counts = vec![0usize; n];
        for (&(j, k), corners) in &self.detections {
            if j >= m || k >= n {
                return v(format!("detection (pose {j}, camera {k}) references a missing pose or camera"));
            }
            if corners.len() != l {
                return v(format!(
                    "detection (pose {j}, camera {k}) has {} corners, expected {l}",
                    corners.len()
                ));
            }
            if corners.iter().any(|c| !c.x.is_finite() || !c.y.is_finite()) {
                return v(format!("detection (pose {j}, camera {k}) has non-finite corners"));
            }
            counts[k] += 1;
        }
        for (k, &c) in counts.iter().enumerate() {
            if c < MIN_DETECTIONS_PER_CAMERA {
                return v(format!(
                    "camera {k} has {c} detections, need at least {MIN_DETECTIONS_PER_CAMERA}"
                ));
            }
        }
        Ok(())
    }

    pub fn cameras(&self) -> &[CameraIntrinsics<T>] {
        &self.cameras
    }

    pub fn board(&self) -> &BoardModel<T> {
        &self.board
    }

    pub fn robot_poses(&self) -> &[Pose<T>] {
        &self.robot_poses
    }

    pub fn robot_pose(&self, j: usize) -> &Pose<T> {
        &self.robot_poses[j]
    }

    /// Number of cameras `N`.
    pub fn n_cameras(&self) -> usize {
        self.cameras.len()
    }

    /// Number of robot poses `M`.
    pub fn n_poses(&self) -> usize {
        self.robot_poses.len()
    }

    /// Corners per detection `L`.
    pub fn n_corners(&self) -> usize {
        self.board.corner_count()
    }

    pub fn detection(&self, j: usize, k: usize) -> Option<&[Vector2<T>]> {
        self.detections.get(&(j, k)).map(Vec::as_slice)
    }

    pub fn has_detection(&self, j: usize, k: usize) -> bool {
        self.detections.contains_key(&(j, k))
    }

    /// All detections ordered by `(pose, camera)`.
    pub fn detections(&self) -> impl Iterator<Item = (usize, usize, &[Vector2<T>])> + '_ {
        self.detections
            .iter()
            .map(|(&(j, k), c)| (j, k, c.as_slice()))
    }

    pub fn detection_count(&self) -> usize {
        self.detections.len()
    }

    /// Poses at which camera `k` detected the board, ascending.
    pub fn poses_seen_by(&self, k: usize) -> Vec<usize> {
        self.detections
            .keys()
            .filter(|&&(_, kk)| kk == k)
            .map(|&(j, _)| j)
            .collect()
    }

    pub fn detections_per_camera(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_cameras()];
        for &(_, k) in self.detections.keys() {
            counts[k] += 1;
        }
        counts
    }

    pub fn cross_matrix(&self, j: usize) -> Result<CrossDetectionMatrix, DatasetError> {
        cross_matrix(self, j)
    }

    /// Ordered camera pairs `(k, t)`, `k != t`, that co-observe the board at
    /// least once.
    pub fn co_visible_pairs(&self) -> BTreeSet<(usize, usize)> {
        let mut pairs = BTreeSet::new();
        for j in 0..self.n_poses() {
            let x = cross_matrix(self, j).expect("pose index in range");
            pairs.extend(x.ordered_pairs());
        }
        pairs
    }

    /// Keeps only the listed cameras, renumbered in the given order.
    pub fn select_cameras(&self, cams: &[usize]) -> Result<Self, DatasetError> {
        let cameras = cams
            .iter()
            .map(|&k| {
                self.cameras
                    .get(k)
                    .copied()
                    .ok_or(DatasetError::IndexOutOfRange { index: k, len: self.n_cameras() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut dets = Vec::new();
        for (new_k, &old_k) in cams.iter().enumerate() {
            for (j, k, c) in self.detections() {
                if k == old_k {
                    dets.push(Detection {
                        pose_index: j,
                        camera_index: new_k,
                        corners: c.to_vec(),
                    });
                }
            }
        }
        Dataset::new(cameras, self.board, self.robot_poses.clone(), dets)
    }

    pub fn cast<U: Real>(&self) -> Dataset<U> {
        let c = |x: T| crate::real::lit::<U>(crate::real::to_f64(x));
        Dataset {
            cameras: self.cameras.iter().map(|i| i.cast()).collect(),
            board: BoardModel {
                rows: self.board.rows,
                cols: self.board.cols,
                spacing: c(self.board.spacing),
            },
            robot_poses: self.robot_poses.iter().map(|p| p.cast()).collect(),
            detections: self
                .detections
                .iter()
                .map(|(&key, v)| (key, v.iter().map(|p| p.map(c)).collect()))
                .collect(),
        }
    }
}

/// Binary, symmetric, zero-diagonal co-detection matrix of one robot pose.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrossDetectionMatrix {
    pub pose_index: usize,
    n: usize,
    entries: Vec<bool>,
}

impl CrossDetectionMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, k: usize, t: usize) -> bool {
        self.entries[k * self.n + t]
    }

    /// Nonzero entries as ordered pairs `(k, t)`, row-major.
    pub fn ordered_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n)
            .flat_map(move |k| (0..self.n).map(move |t| (k, t)))
            .filter(move |&(k, t)| self.get(k, t))
    }

    pub fn nonzero_count(&self) -> usize {
        self.entries.iter().filter(|&&e| e).count()
    }
}

pub fn cross_matrix<T: Real>(d: &Dataset<T>, j: usize) -> Result<CrossDetectionMatrix, DatasetError> {
    if j >= d.n_poses() {
        return Err(DatasetError::IndexOutOfRange {
            index: j,
            len: d.n_poses(),
        });
    }
    let n = d.n_cameras();
    let mut entries = vec![false; n * n];
    for k in 0..n {
        for t in 0..n {
            entries[k * n + t] = k != t && d.has_detection(j, k) && d.has_detection(j, t);
        }
    }
    Ok(CrossDetectionMatrix {
        pose_index: j,
        n,
        entries,
    })
}
