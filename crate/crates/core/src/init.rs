//! Closed-form estimates: planar board pose from a homography, the Tsai and
//! Park `AX = XB` hand-eye solvers, and the initial guess fed to the joint
//! optimizer.
//!
//! Frame conventions for one camera `k`:
//!
//! * `A_j`: board in camera (`T_B^Ck` at pose `j`), from [`planar_pose`]
//! * `B_j`: end-effector in base (`[T_E^W]_j`), from the robot
//! * `X`: base in camera (`T_W^Ck`), the hand-eye transform
//! * `Z`: board in end-effector (`T_B^E`)
//!
//! so that `A_j = X B_j Z`. Relative motions between two poses `a`, `b`
//! satisfy `(A_b A_a^-1) X = X (B_b B_a^-1)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x6, SMatrix, SVector, SymmetricEigen, Vector2, Vector3};
use thiserror::Error;

use crate::board::BoardModel;
use crate::camera::{project, project_with_jacobian, CameraIntrinsics};
use crate::dataset::Dataset;
use crate::geom::{axis_angle_to_rotation, mean_pose, skew, Pose, RotationMatrix};
use crate::real::{lit, Real};

/// Relative rotations below this are ignored for the rotation solve.
pub const MIN_MOTION_DEG: f64 = 1.0;
const PNP_MAX_ITERATIONS: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitError {
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("insufficient motion{}: {msg}", camera.map(|k| format!(" for camera {k}")).unwrap_or_default())]
    InsufficientMotion { camera: Option<usize>, msg: String },
}

impl InitError {
    pub fn with_camera(self, k: usize) -> Self {
        match self {
            InitError::InsufficientMotion { msg, .. } => InitError::InsufficientMotion {
                camera: Some(k),
                msg,
            },
            InitError::DegenerateConfiguration(m) => {
                InitError::DegenerateConfiguration(format!("camera {k}: {m}"))
            }
        }
    }
}

/// Board pose in one camera at one robot pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoardPoseEstimate<T: Real> {
    pub pose_index: usize,
    pub camera_index: usize,
    pub board_in_camera: Pose<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialGuess<T: Real> {
    /// `T_W^Ck` per camera.
    pub hand_eye: Vec<Pose<T>>,
    /// Shared `T_B^E`, the mean of the per-camera estimates.
    pub board_to_ee: Pose<T>,
    /// Per-camera `T_B^E` estimates before averaging.
    pub board_to_ee_per_camera: Vec<Pose<T>>,
    /// `T_Ct^Ck` keyed by ordered pair `(k, t)`.
    pub cam_to_cam: BTreeMap<(usize, usize), Pose<T>>,
}

impl<T: Real> InitialGuess<T> {
    /// Guess whose camera-to-camera entries are chained from the hand-eye
    /// transforms for every co-visible pair of `d`.
    pub fn from_chain(d: &Dataset<T>, hand_eye: Vec<Pose<T>>, board_to_ee: Pose<T>) -> Self {
        let cam_to_cam = chain_cam_to_cam(d, &hand_eye);
        let n = hand_eye.len();
        Self {
            hand_eye,
            board_to_ee,
            board_to_ee_per_camera: vec![board_to_ee; n],
            cam_to_cam,
        }
    }
}

/// `T_Ct^Ck = T_W^Ck * (T_W^Ct)^-1` for every co-visible ordered pair.
pub fn chain_cam_to_cam<T: Real>(d: &Dataset<T>, hand_eye: &[Pose<T>]) -> BTreeMap<(usize, usize), Pose<T>> {
    d.co_visible_pairs()
        .into_iter()
        .map(|(k, t)| ((k, t), hand_eye[k].compose(&hand_eye[t].inverse())))
        .collect()
}

/// Hartley normalization: centroid to origin, mean distance sqrt(2).
fn hartley<T: Real>(pts: &[Vector2<T>]) -> Matrix3<T> {
    let n: T = lit(pts.len() as f64);
    let mut c = Vector2::zeros();
    for p in pts {
        c += p;
    }
    c /= n;
    let mut mean_dist = T::zero();
    for p in pts {
        mean_dist += (p - c).norm();
    }
    mean_dist /= n;
    let s = if mean_dist > T::zero() {
        lit::<T>(2f64.sqrt()) / mean_dist
    } else {
        T::one()
    };
    Matrix3::new(s, T::zero(), -s * c.x, T::zero(), s, -s * c.y, T::zero(), T::zero(), T::one())
}

fn apply_h<T: Real>(h: &Matrix3<T>, p: &Vector2<T>) -> Vector2<T> {
    let q = h * Vector3::new(p.x, p.y, T::one());
    Vector2::new(q.x / q.z, q.y / q.z)
}

/// Homography mapping board-plane coordinates to `dst` by normalized DLT.
pub fn homography_dlt<T: Real>(src: &[Vector2<T>], dst: &[Vector2<T>]) -> Result<Matrix3<T>, InitError> {
    let l = src.len();
    if l < 4 || dst.len() != l {
        return Err(InitError::DegenerateConfiguration(format!(
            "need at least 4 correspondences, got {l}"
        )));
    }
    let ts = hartley(src);
    let td = hartley(dst);
    let rows = (2 * l).max(9);
    let mut a = DMatrix::<T>::zeros(rows, 9);
    for i in 0..l {
        let s = apply_h(&ts, &src[i]);
        let d = apply_h(&td, &dst[i]);
        let (x, y) = (s.x, s.y);
        let r = 2 * i;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -T::one();
        a[(r, 6)] = d.x * x;
        a[(r, 7)] = d.x * y;
        a[(r, 8)] = d.x;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -T::one();
        a[(r + 1, 6)] = d.y * x;
        a[(r + 1, 7)] = d.y * y;
        a[(r + 1, 8)] = d.y;
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("svd v_t");
    let sv = &svd.singular_values;
    // Singular values are not guaranteed sorted.
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap_or(std::cmp::Ordering::Equal));
    let largest = sv[order[0]];
    let second_smallest = sv[order[7]];
    if !(second_smallest > largest * lit(1e-9)) {
        return Err(InitError::DegenerateConfiguration(
            "homography system is rank deficient (collinear corners?)".into(),
        ));
    }
    let h = v_t.row(order[8]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td.try_inverse().expect("similarity is invertible");
    Ok(td_inv * hn * ts)
}

/// Board pose in the camera from one detection: homography decomposition on
/// undistorted normalized coordinates, then reprojection refinement.
pub fn planar_pose<T: Real>(
    corners: &[Vector2<T>],
    board: &BoardModel<T>,
    intr: &CameraIntrinsics<T>,
) -> Result<Pose<T>, InitError> {
    let pts = board.corner_points();
    if corners.len() != pts.len() {
        return Err(InitError::DegenerateConfiguration(format!(
            "{} corners for a board with {}",
            corners.len(),
            pts.len()
        )));
    }
    planar_pose_from_points(corners, &pts, intr)
}

/// As [`planar_pose`] for an arbitrary planar (z = 0) point subset.
pub fn planar_pose_from_points<T: Real>(
    corners: &[Vector2<T>],
    board_points: &[Vector3<T>],
    intr: &CameraIntrinsics<T>,
) -> Result<Pose<T>, InitError> {
    let src: Vec<Vector2<T>> = board_points.iter().map(|p| p.xy()).collect();
    let dst: Vec<Vector2<T>> = corners.iter().map(|c| intr.normalize_pixel(c)).collect();
    let h = homography_dlt(&src, &dst)?;

    let h1 = h.column(0).into_owned();
    let h2 = h.column(1).into_owned();
    let h3 = h.column(2).into_owned();
    let lambda = lit::<T>(2.0) / (h1.norm() + h2.norm());
    let mut r1 = h1 * lambda;
    let mut r2 = h2 * lambda;
    let mut t = h3 * lambda;

    let mut centroid = Vector3::zeros();
    for p in board_points {
        centroid += p;
    }
    centroid /= lit::<T>(board_points.len() as f64);
    // The board centroid must lie in front of the camera.
    if (r1 * centroid.x + r2 * centroid.y + t).z < T::zero() {
        r1 = -r1;
        r2 = -r2;
        t = -t;
    }
    let r3 = r1.cross(&r2);
    let m = Matrix3::from_columns(&[r1, r2, r3]);
    let linear = Pose::new(RotationMatrix::project(&m), t);
    Ok(refine_pose(corners, board_points, intr, linear))
}

fn reprojection_cost<T: Real>(
    pose: &Pose<T>,
    corners: &[Vector2<T>],
    board_points: &[Vector3<T>],
    intr: &CameraIntrinsics<T>,
) -> Option<T> {
    let mut sum = T::zero();
    for (p, c) in board_points.iter().zip(corners) {
        sum += (project(&pose.apply(p), intr).ok()? - c).norm_squared();
    }
    Some(sum)
}

/// Levenberg-Marquardt on pixel reprojection error, perturbing the pose on
/// the left (`R <- exp(w) R`, `t <- exp(w) t + dt`). Returns the input if it
/// cannot be improved.
pub fn refine_pose<T: Real>(
    corners: &[Vector2<T>],
    board_points: &[Vector3<T>],
    intr: &CameraIntrinsics<T>,
    initial: Pose<T>,
) -> Pose<T> {
    let Some(mut cost) = reprojection_cost(&initial, corners, board_points, intr) else {
        return initial;
    };
    let mut pose = initial;
    let mut lambda: T = lit(1e-3);
    for _ in 0..PNP_MAX_ITERATIONS {
        let mut h = SMatrix::<T, 6, 6>::zeros();
        let mut g = SVector::<T, 6>::zeros();
        for (p, c) in board_points.iter().zip(corners) {
            let q = pose.apply(p);
            let Ok((px, jp)) = project_with_jacobian(&q, intr) else {
                return pose;
            };
            let mut dq = Matrix3x6::<T>::zeros();
            dq.fixed_view_mut::<3, 3>(0, 0).copy_from(&-skew(&q));
            dq.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
            let j = jp * dq;
            h += j.transpose() * j;
            g += j.transpose() * (px - c);
        }
        let mut improved = false;
        while lambda < lit(1e10) {
            let mut damped = h;
            for i in 0..6 {
                damped[(i, i)] += lambda * (T::one() + h[(i, i)]);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= lit(10.0);
                continue;
            };
            let delta = -chol.solve(&g);
            let w = axis_angle_to_rotation(&Vector3::new(delta[0], delta[1], delta[2]));
            let trial = Pose::new(
                w.compose(&pose.rotation),
                w.apply(&pose.translation) + Vector3::new(delta[3], delta[4], delta[5]),
            );
            match reprojection_cost(&trial, corners, board_points, intr) {
                Some(c) if c < cost => {
                    let rel = (cost - c) / cost.max(lit(1e-300));
                    pose = trial;
                    cost = c;
                    lambda = (lambda * lit(0.1)).max(lit(1e-12));
                    improved = rel > lit(1e-12);
                    break;
                }
                _ => lambda *= lit(10.0),
            }
        }
        if !improved {
            break;
        }
    }
    pose
}

/// Board poses for every detection of camera `k`, ordered by pose index.
pub fn board_poses_for_camera<T: Real>(d: &Dataset<T>, k: usize) -> Result<Vec<BoardPoseEstimate<T>>, InitError> {
    let intr = &d.cameras()[k];
    d.poses_seen_by(k)
        .into_iter()
        .map(|j| {
            let corners = d.detection(j, k).expect("detection listed by poses_seen_by");
            planar_pose(corners, d.board(), intr)
                .map(|board_in_camera| BoardPoseEstimate {
                    pose_index: j,
                    camera_index: k,
                    board_in_camera,
                })
                .map_err(|e| match e {
                    InitError::DegenerateConfiguration(m) => {
                        InitError::DegenerateConfiguration(format!("camera {k}, pose {j}: {m}"))
                    }
                    other => other,
                })
        })
        .collect()
}

struct Motion<T: Real> {
    a: Pose<T>,
    b: Pose<T>,
}

/// Consecutive pairs of the detections, in pose-index order.
fn relative_motions<T: Real>(board_poses: &[BoardPoseEstimate<T>], robot_poses: &[Pose<T>]) -> Vec<Motion<T>> {
    let mut sorted: Vec<&BoardPoseEstimate<T>> = board_poses.iter().collect();
    sorted.sort_by_key(|b| b.pose_index);
    sorted
        .windows(2)
        .map(|w| {
            let (p, q) = (w[0], w[1]);
            Motion {
                a: q.board_in_camera.compose(&p.board_in_camera.inverse()),
                b: robot_poses[q.pose_index].compose(&robot_poses[p.pose_index].inverse()),
            }
        })
        .collect()
}

/// Motions with enough rotation for the rotation solve, after checking
/// that their axes span more than one direction.
fn rotating_motions<T: Real>(motions: &[Motion<T>]) -> Result<Vec<&Motion<T>>, InitError> {
    let min_angle: T = lit(MIN_MOTION_DEG.to_radians());
    let rotating: Vec<&Motion<T>> = motions
        .iter()
        .filter(|m| m.b.rotation.angle() >= min_angle)
        .collect();
    if rotating.is_empty() {
        return Err(InitError::InsufficientMotion {
            camera: None,
            msg: format!("all relative rotations are below {MIN_MOTION_DEG} degree"),
        });
    }
    let mut scatter = Matrix3::<T>::zeros();
    for m in &rotating {
        let axis = m.b.rotation.to_axis_angle().normalize();
        scatter += axis * axis.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let mut ev: Vec<T> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let sin_min = min_angle.sin();
    if !(ev[1] > ev[0] * sin_min * sin_min) {
        return Err(InitError::InsufficientMotion {
            camera: None,
            msg: "rotation axes of all motions are parallel".into(),
        });
    }
    Ok(rotating)
}

/// Translation of `X` from `(R_A - I) t_X = R_X t_B - t_A`, least squares.
fn solve_translation<T: Real>(motions: &[Motion<T>], rx: &RotationMatrix<T>) -> Result<Vector3<T>, InitError> {
    let mut a = DMatrix::<T>::zeros(3 * motions.len(), 3);
    let mut rhs = DVector::<T>::zeros(3 * motions.len());
    for (i, m) in motions.iter().enumerate() {
        let ra = m.a.rotation.matrix() - Matrix3::identity();
        a.view_mut((3 * i, 0), (3, 3)).copy_from(&ra);
        let r = rx.apply(&m.b.translation) - m.a.translation;
        rhs.rows_mut(3 * i, 3).copy_from(&r);
    }
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.max();
    let sol = svd
        .solve(&rhs, max_sv * lit(1e-12))
        .map_err(|e| InitError::DegenerateConfiguration(e.to_string()))?;
    Ok(Vector3::new(sol[0], sol[1], sol[2]))
}

/// `Z_j = B_j^-1 X^-1 A_j`, averaged over all detections.
fn recover_board_to_ee<T: Real>(
    board_poses: &[BoardPoseEstimate<T>],
    robot_poses: &[Pose<T>],
    x: &Pose<T>,
) -> Pose<T> {
    let x_inv = x.inverse();
    let zs: Vec<Pose<T>> = board_poses
        .iter()
        .map(|bp| {
            robot_poses[bp.pose_index]
                .inverse()
                .compose(&x_inv)
                .compose(&bp.board_in_camera)
        })
        .collect();
    mean_pose(&zs).expect("at least one board pose")
}

fn check_count<T: Real>(board_poses: &[BoardPoseEstimate<T>]) -> Result<(), InitError> {
    if board_poses.len() < 3 {
        return Err(InitError::InsufficientMotion {
            camera: None,
            msg: format!("need at least 3 detections, got {}", board_poses.len()),
        });
    }
    Ok(())
}

/// Park and Martin: rotation from the Lie-algebra least-squares fit
/// `R_X = (M^T M)^-1/2 M^T`, `M = sum beta alpha^T`; translation by linear
/// least squares. Returns `(T_W^C, T_B^E)`.
pub fn solve_park<T: Real>(
    board_poses: &[BoardPoseEstimate<T>],
    robot_poses: &[Pose<T>],
) -> Result<(Pose<T>, Pose<T>), InitError> {
    check_count(board_poses)?;
    let motions = relative_motions(board_poses, robot_poses);
    let rotating = rotating_motions(&motions)?;

    let mut m = Matrix3::<T>::zeros();
    for mo in &rotating {
        let alpha = mo.a.rotation.to_axis_angle();
        let beta = mo.b.rotation.to_axis_angle();
        m += beta * alpha.transpose();
    }
    // (M^T M)^-1/2 M^T = U V^T for M^T = U S V^T
    let rx = RotationMatrix::project(&m.transpose());
    let tx = solve_translation(&motions, &rx)?;
    let x = Pose::new(rx, tx);
    let z = recover_board_to_ee(board_poses, robot_poses, &x);
    Ok((x, z))
}

fn modified_rodrigues<T: Real>(r: &RotationMatrix<T>) -> Vector3<T> {
    let v = r.to_axis_angle();
    let theta = v.norm();
    if theta <= T::zero() {
        return Vector3::zeros();
    }
    v * (lit::<T>(2.0) * (theta * lit(0.5)).sin() / theta)
}

/// Tsai and Lenz: rotation from `skew(P_A + P_B) P' = P_B - P_A` with
/// `P = 2 sin(theta/2) n`, translation by linear least squares. Returns
/// `(T_W^C, T_B^E)`.
pub fn solve_tsai<T: Real>(
    board_poses: &[BoardPoseEstimate<T>],
    robot_poses: &[Pose<T>],
) -> Result<(Pose<T>, Pose<T>), InitError> {
    check_count(board_poses)?;
    let motions = relative_motions(board_poses, robot_poses);
    let rotating = rotating_motions(&motions)?;

    let mut a = DMatrix::<T>::zeros(3 * rotating.len(), 3);
    let mut rhs = DVector::<T>::zeros(3 * rotating.len());
    for (i, mo) in rotating.iter().enumerate() {
        let pa = modified_rodrigues(&mo.a.rotation);
        let pb = modified_rodrigues(&mo.b.rotation);
        a.view_mut((3 * i, 0), (3, 3)).copy_from(&skew(&(pa + pb)));
        rhs.rows_mut(3 * i, 3).copy_from(&(pb - pa));
    }
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.max();
    let min_sv = svd.singular_values.min();
    if !(min_sv > max_sv * lit(1e-10)) {
        return Err(InitError::InsufficientMotion {
            camera: None,
            msg: "Tsai rotation system is ill-conditioned".into(),
        });
    }
    let p_prime = svd
        .solve(&rhs, T::zero())
        .map_err(|e| InitError::DegenerateConfiguration(e.to_string()))?;
    let p_prime = Vector3::new(p_prime[0], p_prime[1], p_prime[2]);
    let p = p_prime * (lit::<T>(2.0) / (T::one() + p_prime.norm_squared()).sqrt());
    let p2 = p.norm_squared();
    let half: T = lit(0.5);
    let m = Matrix3::identity() * (T::one() - p2 * half)
        + (p * p.transpose() + skew(&p) * (lit::<T>(4.0) - p2).max(T::zero()).sqrt()) * half;
    let rx = RotationMatrix::project(&m);
    let tx = solve_translation(&motions, &rx)?;
    let x = Pose::new(rx, tx);
    let z = recover_board_to_ee(board_poses, robot_poses, &x);
    Ok((x, z))
}

/// Per-camera Park solutions, the averaged shared `T_B^E`, and chained
/// camera-to-camera transforms.
pub fn build_initial_guess<T: Real>(d: &Dataset<T>) -> Result<InitialGuess<T>, InitError> {
    let mut hand_eye = Vec::with_capacity(d.n_cameras());
    let mut zs = Vec::with_capacity(d.n_cameras());
    for k in 0..d.n_cameras() {
        let bps = board_poses_for_camera(d, k)?;
        let (x, z) = solve_park(&bps, d.robot_poses()).map_err(|e| e.with_camera(k))?;
        hand_eye.push(x);
        zs.push(z);
    }
    let board_to_ee = mean_pose(&zs).expect("at least one camera");
    let cam_to_cam = chain_cam_to_cam(d, &hand_eye);
    Ok(InitialGuess {
        hand_eye,
        board_to_ee,
        board_to_ee_per_camera: zs,
        cam_to_cam,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::axis_angle_to_rotation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intr() -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(900.0, 905.0, 640.0, 360.0, [-0.08, 0.02, 3e-4, -2e-4, 0.0], 1280, 720).unwrap()
    }

    fn board() -> BoardModel<f64> {
        BoardModel::new(3, 4, 0.05).unwrap()
    }

    fn project_board(pose: &Pose<f64>, board: &BoardModel<f64>, intr: &CameraIntrinsics<f64>) -> Vec<Vector2<f64>> {
        board
            .corner_points()
            .iter()
            .map(|p| project(&pose.apply(p), intr).unwrap())
            .collect()
    }

    fn random_pose(rng: &mut ChaCha8Rng, max_angle: f64) -> Pose<f64> {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let axis = if axis.norm() < 1e-3 { Vector3::z() } else { axis.normalize() };
        let r = axis_angle_to_rotation(&(axis * rng.random_range(0.0..max_angle)));
        let t = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        Pose::new(r, t)
    }

    #[test]
    fn fronto_parallel_board_recovered() {
        let truth = Pose::from_translation(Vector3::new(0.0, 0.0, 1.0));
        let corners = project_board(&truth, &board(), &intr());
        let est = planar_pose(&corners, &board(), &intr()).unwrap();
        assert!((est.translation - truth.translation).norm() < 1e-6);
        assert!(crate::geom::relative_angle_deg(&est.rotation, &truth.rotation) < 1e-5);
    }

    #[test]
    fn random_noiseless_board_poses_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (b, k) = (board(), intr());
        let mut tested = 0;
        let mut worst: f64 = 0.0;
        while tested < 500 {
            let r = axis_angle_to_rotation(&Vector3::new(
                rng.random_range(-0.9..0.9),
                rng.random_range(-0.9..0.9),
                rng.random_range(-3.0..3.0),
            ));
            let t = Vector3::new(rng.random_range(-0.4..0.4), rng.random_range(-0.3..0.3), rng.random_range(0.4..3.0));
            let truth = Pose::new(r, t);
            let pts: Vec<_> = b.corner_points().iter().map(|p| truth.apply(p)).collect();
            if pts.iter().any(|p| p.z < 0.1) {
                continue;
            }
            let corners: Vec<_> = pts.iter().map(|p| project(p, &k).unwrap()).collect();
            if !corners.iter().all(|c| crate::camera::in_image(c, &k)) {
                continue;
            }
            let est = planar_pose(&corners, &b, &k).unwrap();
            worst = worst.max((est.translation - truth.translation).norm());
            tested += 1;
        }
        assert!(worst < 1e-5, "worst translation error {worst}");
    }

    #[test]
    fn permuted_corners_give_a_different_pose() {
        let truth = Pose::new(axis_angle_to_rotation(&Vector3::new(0.2, -0.3, 0.1)), Vector3::new(0.05, 0.02, 1.2));
        let mut corners = project_board(&truth, &board(), &intr());
        corners.swap(0, 5);
        corners.swap(3, 9);
        let est = planar_pose(&corners, &board(), &intr()).unwrap();
        assert!((est.translation - truth.translation).norm() > 1e-3);
    }

    #[test]
    fn collinear_corners_are_degenerate() {
        let k = intr();
        let pts = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.05, 0.0, 0.0), Vector3::new(0.1, 0.0, 0.0)];
        let truth = Pose::from_translation(Vector3::new(0.0, 0.0, 1.0));
        let corners: Vec<_> = pts.iter().map(|p| project(&truth.apply(p), &k).unwrap()).collect();
        assert!(matches!(
            planar_pose_from_points(&corners, &pts, &k),
            Err(InitError::DegenerateConfiguration(_))
        ));
        let pts: Vec<_> = (0..6).map(|i| Vector3::new(0.05 * i as f64, 0.0, 0.0)).collect();
        let corners: Vec<_> = pts.iter().map(|p| project(&truth.apply(p), &k).unwrap()).collect();
        assert!(matches!(
            planar_pose_from_points(&corners, &pts, &k),
            Err(InitError::DegenerateConfiguration(_))
        ));
    }

    fn exact_board_poses(x: &Pose<f64>, z: &Pose<f64>, robot: &[Pose<f64>]) -> Vec<BoardPoseEstimate<f64>> {
        robot
            .iter()
            .enumerate()
            .map(|(j, b)| BoardPoseEstimate {
                pose_index: j,
                camera_index: 0,
                board_in_camera: x.compose(b).compose(z),
            })
            .collect()
    }

    fn check_solution(sol: (Pose<f64>, Pose<f64>), x: &Pose<f64>, z: &Pose<f64>, tol_m: f64, tol_deg: f64) {
        let (xe, ze) = sol;
        assert!((xe.translation - x.translation).norm() < tol_m, "X translation {}", (xe.translation - x.translation).norm());
        assert!(crate::geom::relative_angle_deg(&xe.rotation, &x.rotation) < tol_deg);
        assert!((ze.translation - z.translation).norm() < tol_m);
        assert!(crate::geom::relative_angle_deg(&ze.rotation, &z.rotation) < tol_deg);
    }

    #[test]
    fn park_and_tsai_recover_exact_hand_eye() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = random_pose(&mut rng, 3.0);
            let z = random_pose(&mut rng, 3.0);
            let robot: Vec<_> = (0..10).map(|_| random_pose(&mut rng, 3.0)).collect();
            let bps = exact_board_poses(&x, &z, &robot);
            let park = solve_park(&bps, &robot).unwrap();
            let tsai = solve_tsai(&bps, &robot).unwrap();
            check_solution(park, &x, &z, 1e-6, 1e-5);
            check_solution(tsai, &x, &z, 1e-6, 1e-5);
            assert!((park.0.translation - tsai.0.translation).norm() < 1e-6);
            // AX = XB residual on every motion
            for m in relative_motions(&bps, &robot) {
                let lhs = m.a.compose(&park.0);
                let rhs = park.0.compose(&m.b);
                assert!((lhs.rotation.matrix() - rhs.rotation.matrix()).norm() < 1e-9);
                assert!((lhs.translation - rhs.translation).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn minimal_two_motion_case_is_exact() {
        let x = Pose::new(axis_angle_to_rotation(&Vector3::new(0.4, -1.1, 0.7)), Vector3::new(0.3, -0.2, 2.0));
        let z = Pose::new(axis_angle_to_rotation(&Vector3::new(-0.2, 0.1, 0.5)), Vector3::new(0.01, 0.02, 0.1));
        let b0 = Pose::from_translation(Vector3::new(0.5, 0.0, 0.8));
        let b1 = Pose::new(axis_angle_to_rotation(&Vector3::new(0.5, 0.0, 0.0)), Vector3::new(0.4, 0.1, 0.7)).compose(&b0);
        let b2 = Pose::new(axis_angle_to_rotation(&Vector3::new(0.0, 0.6, 0.0)), Vector3::new(-0.1, 0.2, 0.1)).compose(&b1);
        let robot = vec![b0, b1, b2];
        let bps = exact_board_poses(&x, &z, &robot);
        check_solution(solve_park(&bps, &robot).unwrap(), &x, &z, 1e-9, 1e-7);
        check_solution(solve_tsai(&bps, &robot).unwrap(), &x, &z, 1e-9, 1e-7);
    }

    #[test]
    fn pure_translations_are_insufficient() {
        let x = Pose::from_translation(Vector3::new(0.0, 0.0, 2.0));
        let z = Pose::identity();
        let robot: Vec<_> = (0..5).map(|i| Pose::from_translation(Vector3::new(0.1 * i as f64, 0.05, 0.0))).collect();
        let bps = exact_board_poses(&x, &z, &robot);
        assert!(matches!(solve_park(&bps, &robot), Err(InitError::InsufficientMotion { .. })));
        assert!(matches!(solve_tsai(&bps, &robot), Err(InitError::InsufficientMotion { .. })));
    }

    #[test]
    fn parallel_axes_are_insufficient() {
        let x = Pose::new(axis_angle_to_rotation(&Vector3::new(0.4, -1.1, 0.7)), Vector3::new(0.3, -0.2, 2.0));
        let z = Pose::identity();
        let robot: Vec<_> = (0..6)
            .map(|i| Pose::new(RotationMatrix::rot_z(0.3 * i as f64), Vector3::new(0.1 * i as f64, 0.0, 0.2)))
            .collect();
        let bps = exact_board_poses(&x, &z, &robot);
        assert!(matches!(solve_tsai(&bps, &robot), Err(InitError::InsufficientMotion { .. })));
        assert!(matches!(solve_park(&bps, &robot), Err(InitError::InsufficientMotion { .. })));
    }
}
