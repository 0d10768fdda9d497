//! Accuracy metrics: errors against ground truth, and ground-truth-free
//! AX=ZB closure errors built from per-detection board poses.
//!
//! AX=ZB frames: `A` is the camera in the board frame (inverse planar
//! pose), `B` the base in the end-effector frame (inverse robot pose), `X`
//! the hand-eye `T_W^Ck` and `Z` the inverse of `T_B^E`, so both sides map
//! base coordinates into the board frame.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::geom::{relative_angle_deg, Pose};
use crate::init::{board_poses_for_camera, build_initial_guess, solve_park, solve_tsai, BoardPoseEstimate, InitError};
use crate::real::{to_f64, Real};
use crate::solver::{solve, CalibrationResult, SolverOptions};

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth<T: Real> {
    pub hand_eye: Vec<Pose<T>>,
    pub board_to_ee: Pose<T>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("estimate has {estimate} cameras but ground truth has {truth}")]
    DimensionMismatch { estimate: usize, truth: usize },
    #[error("no board pose for pose {pose}, camera {camera}")]
    MissingBoardPose { pose: usize, camera: usize },
    #[error("board pose estimation failed: {0}")]
    BoardPose(InitError),
}

/// Mean errors with their per-camera breakdown; millimeters and degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub e_t_mm: f64,
    pub e_theta_deg: f64,
    pub per_camera_t_mm: Vec<f64>,
    pub per_camera_theta_deg: Vec<f64>,
}

/// What every calibration method produces: hand-eye transforms plus either
/// one shared `T_B^E` or one per camera.
#[derive(Clone, Debug, PartialEq)]
pub struct HandEyeEstimate<T: Real> {
    pub hand_eye: Vec<Pose<T>>,
    pub board_to_ee: Pose<T>,
    pub board_to_ee_per_camera: Option<Vec<Pose<T>>>,
}

impl<T: Real> HandEyeEstimate<T> {
    /// `T_B^E` used for chains through camera `k`.
    pub fn board_to_ee_for(&self, k: usize) -> &Pose<T> {
        self.board_to_ee_per_camera
            .as_ref()
            .and_then(|zs| zs.get(k))
            .unwrap_or(&self.board_to_ee)
    }

    pub fn from_result(r: &CalibrationResult<T>) -> Self {
        Self {
            hand_eye: r.hand_eye.clone(),
            board_to_ee: r.board_to_ee,
            board_to_ee_per_camera: (!r.options.shared_z_enabled).then(|| r.board_to_ee_per_camera.clone()),
        }
    }

    pub fn from_truth(gt: &GroundTruth<T>) -> Self {
        Self {
            hand_eye: gt.hand_eye.clone(),
            board_to_ee: gt.board_to_ee,
            board_to_ee_per_camera: None,
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Mean translation (mm) and rotation (deg) error of the hand-eye
/// transforms against ground truth.
pub fn gt_errors<T: Real>(hand_eye: &[Pose<T>], truth: &GroundTruth<T>) -> Result<ErrorSummary, MetricsError> {
    if hand_eye.len() != truth.hand_eye.len() {
        return Err(MetricsError::DimensionMismatch {
            estimate: hand_eye.len(),
            truth: truth.hand_eye.len(),
        });
    }
    let per_t: Vec<f64> = hand_eye
        .iter()
        .zip(&truth.hand_eye)
        .map(|(e, g)| to_f64((e.translation - g.translation).norm()) * 1e3)
        .collect();
    let per_r: Vec<f64> = hand_eye
        .iter()
        .zip(&truth.hand_eye)
        .map(|(e, g)| to_f64(relative_angle_deg(&e.rotation, &g.rotation)))
        .collect();
    Ok(ErrorSummary {
        e_t_mm: mean(&per_t),
        e_theta_deg: mean(&per_r),
        per_camera_t_mm: per_t,
        per_camera_theta_deg: per_r,
    })
}

pub fn gt_errors_for_result<T: Real>(
    result: &CalibrationResult<T>,
    truth: &GroundTruth<T>,
) -> Result<ErrorSummary, MetricsError> {
    gt_errors(&result.hand_eye, truth)
}

/// Closure error of one `(pose, camera)` chain: meters and degrees.
pub fn axzb_residual<T: Real>(
    board_in_camera: &Pose<T>,
    robot_pose: &Pose<T>,
    hand_eye: &Pose<T>,
    board_to_ee: &Pose<T>,
) -> (T, T) {
    let a = board_in_camera.inverse();
    let b = robot_pose.inverse();
    let z = board_to_ee.inverse();
    let lhs_t = a.rotation.apply(&hand_eye.translation) + a.translation;
    let rhs_t = z.rotation.apply(&b.translation) + z.translation;
    let lhs_r = a.rotation.compose(&hand_eye.rotation);
    let rhs_r = z.rotation.compose(&b.rotation);
    ((lhs_t - rhs_t).norm(), relative_angle_deg(&lhs_r, &rhs_r))
}

/// AX=ZB errors pooled with equal weight over the `(pose, camera)` chains in
/// `pairs`; per-camera values average that camera's chains.
pub fn axzb_errors<T: Real>(
    estimate: &HandEyeEstimate<T>,
    board_poses: &[BoardPoseEstimate<T>],
    robot_poses: &[Pose<T>],
    pairs: &[(usize, usize)],
) -> Result<ErrorSummary, MetricsError> {
    let lookup: BTreeMap<(usize, usize), &Pose<T>> = board_poses
        .iter()
        .map(|bp| ((bp.pose_index, bp.camera_index), &bp.board_in_camera))
        .collect();
    let n = estimate.hand_eye.len();
    let mut per_t = vec![Vec::new(); n];
    let mut per_r = vec![Vec::new(); n];
    let (mut all_t, mut all_r) = (Vec::new(), Vec::new());
    for &(j, k) in pairs {
        let a = lookup
            .get(&(j, k))
            .ok_or(MetricsError::MissingBoardPose { pose: j, camera: k })?;
        if k >= n {
            return Err(MetricsError::DimensionMismatch {
                estimate: n,
                truth: k + 1,
            });
        }
        let (et, er) = axzb_residual(*a, &robot_poses[j], &estimate.hand_eye[k], estimate.board_to_ee_for(k));
        let (et, er) = (to_f64(et) * 1e3, to_f64(er));
        per_t[k].push(et);
        per_r[k].push(er);
        all_t.push(et);
        all_r.push(er);
    }
    Ok(ErrorSummary {
        e_t_mm: mean(&all_t),
        e_theta_deg: mean(&all_r),
        per_camera_t_mm: per_t.iter().map(|v| mean(v)).collect(),
        per_camera_theta_deg: per_r.iter().map(|v| mean(v)).collect(),
    })
}

/// Planar board poses for every detection of `d`.
pub fn all_board_poses<T: Real>(d: &Dataset<T>) -> Result<Vec<BoardPoseEstimate<T>>, MetricsError> {
    let mut out = Vec::with_capacity(d.detection_count());
    for k in 0..d.n_cameras() {
        out.extend(board_poses_for_camera(d, k).map_err(|e| MetricsError::BoardPose(e.with_camera(k)))?);
    }
    Ok(out)
}

/// AX=ZB errors over every detection of the dataset.
pub fn axzb_errors_on_dataset<T: Real>(
    estimate: &HandEyeEstimate<T>,
    d: &Dataset<T>,
    board_poses: &[BoardPoseEstimate<T>],
) -> Result<ErrorSummary, MetricsError> {
    let pairs: Vec<(usize, usize)> = d.detections().map(|(j, k, _)| (j, k)).collect();
    axzb_errors(estimate, board_poses, d.robot_poses(), &pairs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ours")]
    Ours,
    #[serde(rename = "ours-no-cross")]
    OursNoCross,
    #[serde(rename = "ours-independent-Z")]
    OursIndependentZ,
    #[serde(rename = "tsai")]
    Tsai,
    #[serde(rename = "park")]
    Park,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Ours,
        Method::OursNoCross,
        Method::OursIndependentZ,
        Method::Tsai,
        Method::Park,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::OursNoCross => "ours-no-cross",
            Method::OursIndependentZ => "ours-independent-Z",
            Method::Tsai => "tsai",
            Method::Park => "park",
        }
    }
}

/// One row of a method comparison. Error columns are `None` when the method
/// failed (`diverged` then holds the reason) or, for the ground-truth
/// columns, when no ground truth was supplied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: Method,
    pub e_t_gt: Option<f64>,
    pub e_theta_gt: Option<f64>,
    pub e_t_axzb: Option<f64>,
    pub e_theta_axzb: Option<f64>,
    pub per_camera_t_gt: Option<Vec<f64>>,
    pub per_camera_theta_gt: Option<Vec<f64>>,
    pub per_camera_t_axzb: Option<Vec<f64>>,
    pub per_camera_theta_axzb: Option<Vec<f64>>,
    /// Seconds of wall time, initialization included.
    pub runtime: f64,
    /// Whether an iterative method met a convergence test; closed-form
    /// methods always report true when they return.
    pub converged: bool,
    pub diverged: Option<String>,
}

impl MetricsReport {
    pub fn diverged(method: Method, runtime: f64, reason: String) -> Self {
        Self {
            method,
            e_t_gt: None,
            e_theta_gt: None,
            e_t_axzb: None,
            e_theta_axzb: None,
            per_camera_t_gt: None,
            per_camera_theta_gt: None,
            per_camera_t_axzb: None,
            per_camera_theta_axzb: None,
            runtime,
            converged: false,
            diverged: Some(reason),
        }
    }

    pub fn completed(&self) -> bool {
        self.diverged.is_none()
    }
}

/// Builds a report for an estimate; ground-truth columns only with `truth`.
pub fn evaluate_estimate<T: Real>(
    method: Method,
    estimate: &HandEyeEstimate<T>,
    d: &Dataset<T>,
    board_poses: &[BoardPoseEstimate<T>],
    truth: Option<&GroundTruth<T>>,
    runtime: f64,
    converged: bool,
) -> Result<MetricsReport, MetricsError> {
    let gt = truth.map(|t| gt_errors(&estimate.hand_eye, t)).transpose()?;
    let ax = axzb_errors_on_dataset(estimate, d, board_poses)?;
    Ok(MetricsReport {
        method,
        e_t_gt: gt.as_ref().map(|g| g.e_t_mm),
        e_theta_gt: gt.as_ref().map(|g| g.e_theta_deg),
        e_t_axzb: Some(ax.e_t_mm),
        e_theta_axzb: Some(ax.e_theta_deg),
        per_camera_t_gt: gt.as_ref().map(|g| g.per_camera_t_mm.clone()),
        per_camera_theta_gt: gt.as_ref().map(|g| g.per_camera_theta_deg.clone()),
        per_camera_t_axzb: Some(ax.per_camera_t_mm),
        per_camera_theta_axzb: Some(ax.per_camera_theta_deg),
        runtime,
        converged,
        diverged: None,
    })
}

type Baseline<T> = fn(&[BoardPoseEstimate<T>], &[Pose<T>]) -> Result<(Pose<T>, Pose<T>), InitError>;

/// Runs one method end to end on `d`.
pub fn run_method<T: Real>(
    method: Method,
    d: &Dataset<T>,
    options: &SolverOptions,
) -> (Result<(HandEyeEstimate<T>, bool), String>, f64) {
    let start = Instant::now();
    let outcome = match method {
        Method::Ours | Method::OursNoCross | Method::OursIndependentZ => {
            let opts = SolverOptions {
                cross_term_enabled: options.cross_term_enabled && method != Method::OursNoCross,
                shared_z_enabled: options.shared_z_enabled && method != Method::OursIndependentZ,
                ..options.clone()
            };
            build_initial_guess(d)
                .map_err(|e| e.to_string())
                .and_then(|guess| solve(d, &guess, &opts).map_err(|e| e.to_string()))
                .map(|r| (HandEyeEstimate::from_result(&r), r.converged))
        }
        Method::Tsai | Method::Park => {
            let f: Baseline<T> = if method == Method::Tsai { solve_tsai } else { solve_park };
            (0..d.n_cameras())
                .map(|k| {
                    let bps = board_poses_for_camera(d, k).map_err(|e| e.with_camera(k))?;
                    f(&bps, d.robot_poses()).map_err(|e| e.with_camera(k))
                })
                .collect::<Result<Vec<_>, InitError>>()
                .map_err(|e| e.to_string())
                .map(|xz| {
                    let (hand_eye, zs): (Vec<_>, Vec<_>) = xz.into_iter().unzip();
                    let board_to_ee = crate::geom::mean_pose(&zs).unwrap_or(zs[0]);
                    (
                        HandEyeEstimate {
                            hand_eye,
                            board_to_ee,
                            board_to_ee_per_camera: Some(zs),
                        },
                        true,
                    )
                })
        }
    };
    let runtime = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    (outcome, runtime)
}

/// One report per method in [`Method::ALL`] order. A failing method yields a
/// diverged row without affecting the others.
pub fn compare_methods<T: Real>(
    d: &Dataset<T>,
    truth: Option<&GroundTruth<T>>,
    options: &SolverOptions,
) -> Result<Vec<MetricsReport>, MetricsError> {
    compare_selected(d, truth, options, &Method::ALL)
}

pub fn compare_selected<T: Real>(
    d: &Dataset<T>,
    truth: Option<&GroundTruth<T>>,
    options: &SolverOptions,
    methods: &[Method],
) -> Result<Vec<MetricsReport>, MetricsError> {
    if let Some(t) = truth {
        if t.hand_eye.len() != d.n_cameras() {
            return Err(MetricsError::DimensionMismatch {
                estimate: d.n_cameras(),
                truth: t.hand_eye.len(),
            });
        }
    }
    let board_poses = all_board_poses(d)?;
    methods
        .iter()
        .map(|&m| {
            let (outcome, runtime) = run_method(m, d, options);
            match outcome {
                Ok((est, converged)) => evaluate_estimate(m, &est, d, &board_poses, truth, runtime, converged),
                Err(reason) => Ok(MetricsReport::diverged(m, runtime, reason)),
            }
        })
        .collect()
}

/// Spearman rank correlation with average ranks for ties; `None` when
/// either side has no spread.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, mb) = (mean(&ra), mean(&rb));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &p in &idx[i..=j] {
            r[p] = avg;
        }
        i = j + 1;
    }
    r
}

/// Median of the finite values; `None` if there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn cell(v: Option<f64>, precision: usize) -> String {
    v.map(|x| format!("{x:.precision$}")).unwrap_or_else(|| "-".into())
}

/// Aligned plain-text table; ground-truth columns only when any row has them.
pub fn format_table(rows: &[MetricsReport]) -> String {
    let with_gt = rows.iter().any(|r| r.e_t_gt.is_some());
    let mut header = vec!["method"];
    if with_gt {
        header.extend(["e_t_gt[mm]", "e_theta_gt[deg]"]);
    }
    header.extend(["e_t_axzb[mm]", "e_theta_axzb[deg]", "time[s]", "status"]);
    let mut lines: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in rows {
        let mut line = vec![r.method.name().to_string()];
        if with_gt {
            line.push(cell(r.e_t_gt, 4));
            line.push(cell(r.e_theta_gt, 5));
        }
        line.push(cell(r.e_t_axzb, 4));
        line.push(cell(r.e_theta_axzb, 5));
        line.push(format!("{:.3}", r.runtime));
        line.push(match (&r.diverged, r.converged) {
            (Some(_), _) => "diverged".into(),
            (None, true) => "ok".into(),
            (None, false) => "not converged".into(),
        });
        lines.push(line);
    }
    let widths: Vec<usize> = (0..lines[0].len())
        .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for l in &lines {
        let cells: Vec<String> = l
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (s, w))| if i == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    for r in rows {
        if let Some(reason) = &r.diverged {
            out.push_str(&format!("{}: {reason}\n", r.method.name()));
        }
    }
    out
}

/// Translation (mm) and rotation (deg) difference between two poses.
pub fn pose_difference<T: Real>(a: &Pose<T>, b: &Pose<T>) -> (f64, f64) {
    (
        to_f64((a.translation - b.translation).norm()) * 1e3,
        to_f64(relative_angle_deg(&a.rotation, &b.rotation)),
    )
}
