//! Seeded synthetic workcells with exact ground truth.
//!
//! Cameras sit on a horizontal ring around the robot base and look at the
//! middle of the workspace. The end-effector carries the board through a
//! 0.8 m cube above the base, aimed toward the cameras. Corner noise and
//! detection dropout come from counter-addressed ChaCha substreams, so each
//! `(pose, camera, corner)` draw is independent of generation order.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::board::BoardModel;
use crate::camera::{in_image, project, CameraIntrinsics};
use crate::dataset::{Dataset, DatasetError, Detection, MIN_DETECTIONS_PER_CAMERA, MIN_POSES};
use crate::geom::{axis_angle_to_rotation, Pose, RotationMatrix};
use crate::io::{save_dataset, save_ground_truth};
use crate::metrics::GroundTruth;

/// Half-width of the end-effector workspace cube.
const WORKSPACE_HALF: f64 = 0.4;
const WORKSPACE_Z: (f64, f64) = (0.3, 1.1);
const CAMERA_HEIGHT: f64 = 1.2;
const LOOK_AT: Vector3<f64> = Vector3::new(0.0, 0.0, 0.7);
/// Cameras closer than this would sit inside the reachable workspace.
pub const MIN_RADIUS: f64 = 0.8;
pub const MAX_FACING_DEG: f64 = 75.0;
pub const MAX_ATTEMPTS: usize = 100;

const STREAM_NOISE: u64 = 1 << 62;
const STREAM_DROPOUT: u64 = 2 << 62;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("unknown preset {0:?} (expected small, medium or large)")]
    UnknownPreset(String),
    #[error("invalid synthetic configuration: {0}")]
    Config(String),
    #[error("no dataset with at least {min} detections per camera after {attempts} attempts")]
    Exhausted { attempts: usize, min: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Workcell {
    Small,
    Medium,
    Large,
    /// Explicit camera-ring radius in meters.
    Radius(f64),
}

impl Workcell {
    /// Ring radius whose disc roughly matches 6, 12 and 20 square meters.
    pub fn radius(&self) -> f64 {
        match *self {
            Workcell::Small => 1.4,
            Workcell::Medium => 2.0,
            Workcell::Large => 2.5,
            Workcell::Radius(r) => r,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_cameras: usize,
    pub n_poses: usize,
    pub workcell: Workcell,
    pub board: BoardModel<f64>,
    /// Standard deviation of the per-coordinate corner noise, pixels.
    pub pixel_noise_sigma: f64,
    /// Probability that a visible board is not reported.
    pub detection_dropout: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_cameras: 4,
            n_poses: 30,
            workcell: Workcell::Medium,
            board: BoardModel::new(3, 4, 0.05).expect("valid default board"),
            pixel_noise_sigma: 0.5,
            detection_dropout: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let r = self.workcell.radius();
        if !(r.is_finite() && r > 0.0) {
            return Err(SynthError::Config(format!("ring radius must be positive, got {r}")));
        }
        if r < MIN_RADIUS {
            return Err(SynthError::Config(format!(
                "ring radius {r} m puts cameras inside the robot workspace (minimum {MIN_RADIUS} m)"
            )));
        }
        if self.n_cameras == 0 {
            return Err(SynthError::Config("at least one camera is required".into()));
        }
        if self.n_poses < MIN_POSES {
            return Err(SynthError::Config(format!("at least {MIN_POSES} poses are required")));
        }
        if !(self.pixel_noise_sigma >= 0.0 && self.pixel_noise_sigma.is_finite()) {
            return Err(SynthError::Config(format!("noise sigma must be >= 0, got {}", self.pixel_noise_sigma)));
        }
        if !(0.0..1.0).contains(&self.detection_dropout) {
            return Err(SynthError::Config(format!("dropout must be in [0, 1), got {}", self.detection_dropout)));
        }
        self.board.validate().map_err(|e| SynthError::Config(e.to_string()))
    }
}

pub fn preset(name: &str) -> Result<SynthConfig, SynthError> {
    let workcell = match name {
        "small" => Workcell::Small,
        "medium" => Workcell::Medium,
        "large" => Workcell::Large,
        other => return Err(SynthError::UnknownPreset(other.to_string())),
    };
    Ok(SynthConfig {
        workcell,
        ..SynthConfig::default()
    })
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub dataset: Dataset<f64>,
    pub truth: GroundTruth<f64>,
    /// Detections per camera.
    pub visibility_stats: Vec<usize>,
}

impl SynthOutput {
    /// Writes the dataset layout plus `ground_truth.json`.
    pub fn save(&self, root: impl AsRef<Path>) -> Result<(), DatasetError> {
        save_dataset(&self.dataset, &root)?;
        save_ground_truth(&self.truth, &root)
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Rotation about a uniformly random axis by an angle uniform in `[0, max]`.
fn random_rotation(rng: &mut ChaCha8Rng, max_angle: f64) -> RotationMatrix<f64> {
    let axis = random_unit(rng);
    axis_angle_to_rotation(&(axis * uniform(rng, 0.0, max_angle)))
}

/// Frame with `z` along `forward` and `y` as close to `down` as possible.
fn frame_looking(forward: &Vector3<f64>, down: &Vector3<f64>) -> RotationMatrix<f64> {
    let z = forward.normalize();
    let x = down.cross(&z).normalize();
    let y = z.cross(&x);
    RotationMatrix::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]))
}

/// Counter-addressed generator for one substream of `seed`, keyed by the
/// pose-sampling attempt and the `(pose, camera, corner)` triple.
fn substream(seed: u64, tag: u64, attempt: usize, j: usize, k: usize, corner: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag | (attempt as u64) << 48 | (j as u64) << 32 | (k as u64) << 16 | corner as u64);
    rng
}

struct Rig {
    cameras: Vec<CameraIntrinsics<f64>>,
    /// Camera pose in the base frame.
    camera_in_world: Vec<Pose<f64>>,
    board_to_ee: Pose<f64>,
}

fn sample_rig(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Rig {
    let radius = config.workcell.radius();
    let phase = uniform(rng, 0.0, 2.0 * PI);
    let mut cameras = Vec::with_capacity(config.n_cameras);
    let mut camera_in_world = Vec::with_capacity(config.n_cameras);
    for k in 0..config.n_cameras {
        let az = phase + 2.0 * PI * k as f64 / config.n_cameras as f64;
        let jitter = Vector3::new(uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1));
        let position = Vector3::new(radius * az.cos(), radius * az.sin(), CAMERA_HEIGHT) + jitter;
        let look = frame_looking(&(LOOK_AT - position), &-Vector3::z());
        let wobble = random_rotation(rng, 5f64.to_radians());
        camera_in_world.push(Pose::new(look.compose(&wobble), position));

        let f = 920.0 * uniform(rng, 0.97, 1.03);
        cameras.push(
            CameraIntrinsics::new(
                f,
                f * uniform(rng, 0.998, 1.002),
                640.0 + uniform(rng, -5.0, 5.0),
                360.0 + uniform(rng, -5.0, 5.0),
                [
                    uniform(rng, -0.08, 0.02),
                    uniform(rng, -0.02, 0.05),
                    uniform(rng, -5e-4, 5e-4),
                    uniform(rng, -5e-4, 5e-4),
                    0.0,
                ],
                1280,
                720,
            )
            .expect("sampled intrinsics are valid"),
        );
    }
    let z_rot = random_rotation(rng, PI);
    let z_t = Vector3::new(uniform(rng, -0.05, 0.05), uniform(rng, -0.05, 0.05), uniform(rng, 0.05, 0.15));
    Rig {
        cameras,
        camera_in_world,
        board_to_ee: Pose::new(z_rot, z_t),
    }
}

/// Angle between the board's front normal (`-z` of the board frame) and the
/// direction from the board center to the camera.
fn facing_angle_deg(board_in_world: &Pose<f64>, center_b: &Vector3<f64>, camera_in_world: &Pose<f64>) -> f64 {
    let normal = -board_in_world.rotation.matrix().column(2).into_owned();
    let to_camera = camera_in_world.translation - board_in_world.apply(center_b);
    normal.angle(&to_camera).to_degrees()
}

/// Azimuths the board is aimed at, cycled over the poses: the midpoints
/// between neighbouring cameras when one board can face both, otherwise the
/// cameras themselves. Returns the targets and the azimuth jitter.
fn aim_targets(rig: &Rig) -> (Vec<f64>, f64) {
    let mut az: Vec<f64> = rig
        .camera_in_world
        .iter()
        .map(|c| c.translation.y.atan2(c.translation.x))
        .collect();
    az.sort_by(f64::total_cmp);
    let n = az.len();
    let gap = 2.0 * PI / n as f64;
    if n >= 2 && gap <= (2.0 * (MAX_FACING_DEG - 20.0)).to_radians() {
        let mids = (0..n)
            .map(|i| {
                let next = if i + 1 < n { az[i + 1] } else { az[0] + 2.0 * PI };
                0.5 * (az[i] + next)
            })
            .collect();
        (mids, gap / 4.0)
    } else {
        (az, gap.min(PI / 2.0) / 4.0)
    }
}

/// Board pose in the base frame: center in the workspace cube, front face
/// aimed at the ring near `aim_azimuth` with some tilt and a free roll.
fn sample_board_pose(config: &SynthConfig, rig: &Rig, aim: (f64, f64), rng: &mut ChaCha8Rng) -> Pose<f64> {
    let center_b = config.board.center();
    let radius = config.workcell.radius();
    loop {
        let center = Vector3::new(
            uniform(rng, -WORKSPACE_HALF, WORKSPACE_HALF),
            uniform(rng, -WORKSPACE_HALF, WORKSPACE_HALF),
            uniform(rng, WORKSPACE_Z.0, WORKSPACE_Z.1),
        );
        let az = aim.0 + uniform(rng, -aim.1, aim.1);
        let target = Vector3::new(radius * az.cos(), radius * az.sin(), CAMERA_HEIGHT);
        // Board z points away from the target, so the front (-z) faces it.
        let base = frame_looking(&(center - target), &-Vector3::z());
        let roll = axis_angle_to_rotation(&(Vector3::z() * uniform(rng, -PI, PI)));
        let tilt = random_rotation(rng, 20f64.to_radians());
        let rotation = base.compose(&tilt).compose(&roll);
        let pose = Pose::new(rotation, center - rotation.apply(&center_b));
        let faces_some_camera = rig
            .camera_in_world
            .iter()
            .any(|c| facing_angle_deg(&pose, &center_b, c) <= MAX_FACING_DEG);
        if faces_some_camera {
            return pose;
        }
    }
}

fn observe(
    config: &SynthConfig,
    attempt: usize,
    rig: &Rig,
    hand_eye: &[Pose<f64>],
    robot_poses: &[Pose<f64>],
) -> Vec<Detection<f64>> {
    let points = config.board.corner_points();
    let center_b = config.board.center();
    let noise = Normal::new(0.0, config.pixel_noise_sigma).expect("sigma validated");
    let mut detections = Vec::new();
    for (j, ee) in robot_poses.iter().enumerate() {
        let board_in_world = ee.compose(&rig.board_to_ee);
        for k in 0..config.n_cameras {
            if facing_angle_deg(&board_in_world, &center_b, &rig.camera_in_world[k]) > MAX_FACING_DEG {
                continue;
            }
            let chain = hand_eye[k].compose(&board_in_world);
            let projected: Option<Vec<Vector2<f64>>> = points
                .iter()
                .map(|p| {
                    project(&chain.apply(p), &rig.cameras[k])
                        .ok()
                        .filter(|px| in_image(px, &rig.cameras[k]))
                })
                .collect();
            let Some(mut corners) = projected else { continue };
            let drop: f64 = substream(config.seed, STREAM_DROPOUT, attempt, j, k, 0).random();
            if drop < config.detection_dropout {
                continue;
            }
            if config.pixel_noise_sigma > 0.0 {
                for (i, c) in corners.iter_mut().enumerate() {
                    let mut rng = substream(config.seed, STREAM_NOISE, attempt, j, k, i);
                    c.x += noise.sample(&mut rng);
                    c.y += noise.sample(&mut rng);
                }
            }
            detections.push(Detection {
                pose_index: j,
                camera_index: k,
                corners,
            });
        }
    }
    detections
}

/// Builds a dataset whose every camera keeps at least the minimum number of
/// detections, re-sampling end-effector poses when one does not.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rig = sample_rig(config, &mut rng);
    let hand_eye: Vec<Pose<f64>> = rig.camera_in_world.iter().map(|c| c.inverse()).collect();
    let ee_from_board = rig.board_to_ee.inverse();
    let (targets, jitter) = aim_targets(&rig);

    for attempt in 0..MAX_ATTEMPTS {
        let robot_poses: Vec<Pose<f64>> = (0..config.n_poses)
            .map(|j| {
                let aim = (targets[j % targets.len()], jitter);
                sample_board_pose(config, &rig, aim, &mut rng).compose(&ee_from_board)
            })
            .collect();
        let detections = observe(config, attempt, &rig, &hand_eye, &robot_poses);
        let mut counts = vec![0usize; config.n_cameras];
        for d in &detections {
            counts[d.camera_index] += 1;
        }
        if counts.iter().any(|&c| c < MIN_DETECTIONS_PER_CAMERA) {
            continue;
        }
        let dataset = Dataset::new(rig.cameras.clone(), config.board, robot_poses, detections)?;
        return Ok(SynthOutput {
            dataset,
            truth: GroundTruth {
                hand_eye,
                board_to_ee: rig.board_to_ee,
            },
            visibility_stats: counts,
        });
    }
    Err(SynthError::Exhausted {
        attempts: MAX_ATTEMPTS,
        min: MIN_DETECTIONS_PER_CAMERA,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::relative_angle_deg;

    fn noiseless(workcell: Workcell, seed: u64) -> SynthConfig {
        SynthConfig {
            workcell,
            pixel_noise_sigma: 0.0,
            detection_dropout: 0.0,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn presets() {
        assert_eq!(preset("large").unwrap().workcell.radius(), 2.5);
        let s = preset("small").unwrap();
        assert_eq!((s.board.rows, s.board.cols, s.board.spacing), (3, 4, 0.05));
        assert_eq!((s.n_cameras, s.n_poses, s.pixel_noise_sigma, s.detection_dropout), (4, 30, 0.5, 0.1));
        let m = preset("medium").unwrap().workcell.radius();
        assert!(Workcell::Small.radius() < m && m < Workcell::Large.radius());
        assert!(matches!(preset("bogus"), Err(SynthError::UnknownPreset(_))));
    }

    #[test]
    fn rejects_cameras_inside_workspace() {
        let c = SynthConfig {
            workcell: Workcell::Radius(0.5),
            ..SynthConfig::default()
        };
        assert!(matches!(generate(&c), Err(SynthError::Config(_))));
        let c = SynthConfig {
            detection_dropout: 1.0,
            ..SynthConfig::default()
        };
        assert!(matches!(c.validate(), Err(SynthError::Config(_))));
    }

    #[test]
    fn noiseless_corners_reproject_exactly() {
        let out = generate(&noiseless(Workcell::Large, 3)).unwrap();
        let d = &out.dataset;
        let points = d.board().corner_points();
        for (j, k, corners) in d.detections() {
            let chain = out.truth.hand_eye[k]
                .compose(d.robot_pose(j))
                .compose(&out.truth.board_to_ee);
            for (p, c) in points.iter().zip(corners) {
                let px = project(&chain.apply(p), &d.cameras()[k]).unwrap();
                assert!((px - c).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn cameras_look_at_workspace() {
        let out = generate(&noiseless(Workcell::Medium, 11)).unwrap();
        for x in &out.truth.hand_eye {
            let center = x.apply(&LOOK_AT);
            assert!(center.z > 1.0);
            let dir = center.normalize();
            assert!(dir.angle(&Vector3::z()).to_degrees() < 10.0);
        }
        let n = out.truth.hand_eye.len();
        for k in 0..n {
            for t in k + 1..n {
                let r = relative_angle_deg(&out.truth.hand_eye[k].rotation, &out.truth.hand_eye[t].rotation);
                assert!(r > 45.0);
            }
        }
    }

    #[test]
    fn every_camera_keeps_minimum_detections() {
        for seed in 0..10 {
            let c = SynthConfig {
                n_poses: 8,
                workcell: Workcell::Large,
                seed,
                ..SynthConfig::default()
            };
            let out = generate(&c).unwrap();
            assert!(out.visibility_stats.iter().all(|&n| n >= MIN_DETECTIONS_PER_CAMERA));
            assert_eq!(out.visibility_stats, out.dataset.detections_per_camera());
        }
    }

    #[test]
    fn same_seed_same_output() {
        let c = SynthConfig {
            seed: 42,
            ..SynthConfig::default()
        };
        let a = generate(&c).unwrap();
        let b = generate(&c).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.truth, b.truth);
        let other = generate(&SynthConfig { seed: 43, ..c }).unwrap();
        assert_ne!(a.dataset, other.dataset);
    }

    #[test]
    fn noise_is_independent_of_dropout() {
        // Substreams are keyed by (pose, camera, corner): detections present
        // in both runs carry identical noise.
        let base = SynthConfig {
            workcell: Workcell::Large,
            seed: 5,
            detection_dropout: 0.0,
            ..SynthConfig::default()
        };
        let full = generate(&base).unwrap();
        let thinned = generate(&SynthConfig {
            detection_dropout: 0.3,
            ..base.clone()
        })
        .unwrap();
        assert_eq!(full.dataset.robot_poses(), thinned.dataset.robot_poses());
        assert!(thinned.dataset.detection_count() < full.dataset.detection_count());
        for (j, k, c) in thinned.dataset.detections() {
            assert_eq!(full.dataset.detection(j, k).unwrap(), c);
        }
    }

    #[test]
    fn apparent_board_size_shrinks_with_workcell() {
        let mean_extent = |w: Workcell| {
            let out = generate(&noiseless(w, 9)).unwrap();
            let d = &out.dataset;
            let (mut sum, mut n) = (0.0, 0);
            for (_, _, c) in d.detections() {
                sum += (c[0] - c[c.len() - 1]).norm();
                n += 1;
            }
            sum / n as f64
        };
        let s = mean_extent(Workcell::Small);
        let m = mean_extent(Workcell::Medium);
        let l = mean_extent(Workcell::Large);
        assert!(s > m && m > l, "{s} {m} {l}");
    }
}
