use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::problem::CostReport;
use super::SolverOptions;
use crate::dataset::DatasetError;
use crate::geom::{relative_angle_deg, Pose};
use crate::io::{pose_to_record, round12, to_json_pretty};
use crate::real::{to_f64, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    ParameterTolerance,
    CostTolerance,
    MaxIterations,
    /// Every trial step was rejected up to the damping ceiling.
    DampingLimit,
    NumericalFailure,
}

impl Termination {
    pub fn is_convergence(self) -> bool {
        matches!(
            self,
            Termination::GradientTolerance | Termination::ParameterTolerance | Termination::CostTolerance
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub lambda: f64,
    pub step_norm: f64,
    pub accepted: bool,
}

/// Gap between an optimized `T_Ct^Ck` and `T_W^Ck * inv(T_W^Ct)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairConsistency {
    pub camera: usize,
    pub through: usize,
    pub translation_m: f64,
    pub rotation_deg: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationResult<T: Real> {
    /// `T_W^Ck` per camera.
    pub hand_eye: Vec<Pose<T>>,
    /// `T_B^E`; the rotation/translation mean of the per-camera values when
    /// each camera had its own.
    pub board_to_ee: Pose<T>,
    pub board_to_ee_per_camera: Vec<Pose<T>>,
    /// `T_Ct^Ck` keyed by `(k, t)`.
    pub cam_to_cam: BTreeMap<(usize, usize), Pose<T>>,
    pub initial_cost: T,
    pub final_cost: T,
    pub cost: CostReport<T>,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub wall_time: f64,
    pub per_camera_rms_reprojection: Vec<T>,
    pub consistency: Vec<PairConsistency>,
    pub options: SolverOptions,
    pub log: Vec<IterationRecord>,
}

pub(crate) fn consistency_gaps<T: Real>(
    hand_eye: &[Pose<T>],
    cam_to_cam: &BTreeMap<(usize, usize), Pose<T>>,
) -> Vec<PairConsistency> {
    cam_to_cam
        .iter()
        .map(|(&(k, t), c)| {
            let chained = hand_eye[k].compose(&hand_eye[t].inverse());
            PairConsistency {
                camera: k,
                through: t,
                translation_m: to_f64((c.translation - chained.translation).norm()),
                rotation_deg: to_f64(relative_angle_deg(&c.rotation, &chained.rotation)),
            }
        })
        .collect()
}

impl<T: Real> CalibrationResult<T> {
    pub fn cast<U: Real>(&self) -> CalibrationResult<U> {
        let c = |x: T| -> U { crate::real::lit(to_f64(x)) };
        CalibrationResult {
            hand_eye: self.hand_eye.iter().map(|p| p.cast()).collect(),
            board_to_ee: self.board_to_ee.cast(),
            board_to_ee_per_camera: self.board_to_ee_per_camera.iter().map(|p| p.cast()).collect(),
            cam_to_cam: self.cam_to_cam.iter().map(|(&k, p)| (k, p.cast())).collect(),
            initial_cost: c(self.initial_cost),
            final_cost: c(self.final_cost),
            cost: CostReport {
                c_rpj: c(self.cost.c_rpj),
                c_cross: c(self.cost.c_cross),
                c_total: c(self.cost.c_total),
                residual_count: self.cost.residual_count,
            },
            iterations: self.iterations,
            converged: self.converged,
            termination: self.termination,
            wall_time: self.wall_time,
            per_camera_rms_reprojection: self.per_camera_rms_reprojection.iter().map(|&x| c(x)).collect(),
            consistency: self.consistency.clone(),
            options: self.options.clone(),
            log: self.log.clone(),
        }
    }

    pub fn to_record(&self) -> ResultRecord {
        let r = |x: T| round12(to_f64(x));
        ResultRecord {
            hand_eye: self.hand_eye.iter().map(pose_to_record).collect(),
            board_to_ee: pose_to_record(&self.board_to_ee),
            board_to_ee_per_camera: self.board_to_ee_per_camera.iter().map(pose_to_record).collect(),
            cam_to_cam: self
                .cam_to_cam
                .iter()
                .map(|(&(k, t), p)| CamToCamRecord {
                    camera: k,
                    through: t,
                    pose: pose_to_record(p),
                })
                .collect(),
            cost: CostRecord {
                c_rpj: r(self.cost.c_rpj),
                c_cross: r(self.cost.c_cross),
                c_total: r(self.cost.c_total),
                residual_count: self.cost.residual_count,
            },
            initial_cost: r(self.initial_cost),
            final_cost: r(self.final_cost),
            iterations: self.iterations,
            converged: self.converged,
            termination: self.termination,
            wall_time_s: self.wall_time,
            per_camera_rms_reprojection_px: self.per_camera_rms_reprojection.iter().map(|&x| r(x)).collect(),
            consistency: self
                .consistency
                .iter()
                .map(|g| PairConsistency {
                    translation_m: round12(g.translation_m),
                    rotation_deg: round12(g.rotation_deg),
                    ..*g
                })
                .collect(),
            options: self.options.clone(),
            iteration_log: self
                .log
                .iter()
                .map(|l| IterationRecord {
                    cost: round12(l.cost),
                    lambda: round12(l.lambda),
                    step_norm: round12(l.step_norm),
                    ..*l
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CamToCamRecord {
    pub camera: usize,
    pub through: usize,
    pub pose: [f64; 7],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub c_rpj: f64,
    pub c_cross: f64,
    pub c_total: f64,
    pub residual_count: usize,
}

/// On-disk form of a [`CalibrationResult`]; poses use `[x y z qx qy qz qw]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub hand_eye: Vec<[f64; 7]>,
    pub board_to_ee: [f64; 7],
    pub board_to_ee_per_camera: Vec<[f64; 7]>,
    pub cam_to_cam: Vec<CamToCamRecord>,
    pub cost: CostRecord,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub wall_time_s: f64,
    pub per_camera_rms_reprojection_px: Vec<f64>,
    pub consistency: Vec<PairConsistency>,
    pub options: SolverOptions,
    pub iteration_log: Vec<IterationRecord>,
}

impl ResultRecord {
    pub fn to_result(&self) -> Result<CalibrationResult<f64>, String> {
        let pose = |a: &[f64; 7]| Pose::from_array7(a).map_err(|e| e.to_string());
        Ok(CalibrationResult {
            hand_eye: self.hand_eye.iter().map(pose).collect::<Result<_, _>>()?,
            board_to_ee: pose(&self.board_to_ee)?,
            board_to_ee_per_camera: self.board_to_ee_per_camera.iter().map(pose).collect::<Result<_, _>>()?,
            cam_to_cam: self
                .cam_to_cam
                .iter()
                .map(|c| Ok(((c.camera, c.through), pose(&c.pose)?)))
                .collect::<Result<_, String>>()?,
            initial_cost: self.initial_cost,
            final_cost: self.final_cost,
            cost: CostReport {
                c_rpj: self.cost.c_rpj,
                c_cross: self.cost.c_cross,
                c_total: self.cost.c_total,
                residual_count: self.cost.residual_count,
            },
            iterations: self.iterations,
            converged: self.converged,
            termination: self.termination,
            wall_time: self.wall_time_s,
            per_camera_rms_reprojection: self.per_camera_rms_reprojection_px.clone(),
            consistency: self.consistency.clone(),
            options: self.options.clone(),
            log: self.iteration_log.clone(),
        })
    }
}

pub fn save_result<T: Real>(result: &CalibrationResult<T>, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    std::fs::write(path, to_json_pretty(&result.to_record())).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_result(path: impl AsRef<Path>) -> Result<CalibrationResult<f64>, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let record: ResultRecord =
        serde_json::from_str(&text).map_err(|e| DatasetError::format(path, Some(e.line()), e.to_string()))?;
    record
        .to_result()
        .map_err(|msg| DatasetError::Validation(format!("{}: {msg}", path.display())))
}
