//! Joint hand-eye calibration of a camera network around a robot arm.
//!
//! Every camera's pose relative to the robot base, one board-to-end-effector
//! transform shared by all cameras, and camera-to-camera transforms for every
//! co-observing pair are estimated together by minimizing reprojection and
//! cross-projection error with a Cauchy-robust Levenberg-Marquardt solver.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix the scalar for the common cases.

pub mod board;
pub mod camera;
pub mod dataset;
pub mod geom;
pub mod init;
pub mod io;
pub mod metrics;
pub mod real;
pub mod solver;
pub mod synth;

pub use real::Real;

pub type Pose64 = geom::Pose<f64>;
pub type Pose32 = geom::Pose<f32>;
pub type Intrinsics64 = camera::CameraIntrinsics<f64>;
pub type Intrinsics32 = camera::CameraIntrinsics<f32>;
pub type Board64 = board::BoardModel<f64>;
pub type Dataset64 = dataset::Dataset<f64>;
pub type Dataset32 = dataset::Dataset<f32>;
pub type GroundTruth64 = metrics::GroundTruth<f64>;
pub type Params64 = solver::ParameterBlock<f64>;
pub type CalibrationResult64 = solver::CalibrationResult<f64>;
pub type CalibrationResult32 = solver::CalibrationResult<f32>;
pub type MetricsReport = metrics::MetricsReport;
pub type HandEyeEstimate64 = metrics::HandEyeEstimate<f64>;
