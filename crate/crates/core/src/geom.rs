//! Rigid-body geometry: SO(3)/SE(3) values, the axis-angle map used by the
//! optimizer, and the rotation-angle error metric.
//!
//! Naming follows the `T_from^to` convention of the calibration chain: a
//! [`Pose`] maps points expressed in its source frame into its target frame,
//! and `a.compose(&b)` applies `b` first.

use std::fmt;

use nalgebra::{Matrix3, Matrix4, Rotation3, SymmetricEigen, UnitQuaternion, Vector3, Vector4};
use thiserror::Error;

use crate::real::{lit, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("matrix is not a rotation (orthonormality error {ortho:.3e}, det {det:.12})")]
    NotARotation { ortho: f64, det: f64 },
    #[error("quaternion norm {0:.6} deviates from 1 by more than 1e-3")]
    NonUnitQuaternion(f64),
    #[error("non-finite value in pose")]
    NonFinite,
    #[error("cannot average an empty set of rotations")]
    EmptyAverage,
}

/// Orthonormal 3x3 matrix with unit determinant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationMatrix<T: Real>(Matrix3<T>);

impl<T: Real> RotationMatrix<T> {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates `m` against a 1e-9 orthonormality / determinant tolerance
    /// (relaxed to the scalar's precision for f32).
    pub fn new(m: Matrix3<T>) -> Result<Self, GeomError> {
        let tol = lit::<T>(1e-9).max(T::default_epsilon() * lit(64.0));
        let ortho = (m.transpose() * m - Matrix3::identity()).norm();
        let det = m.determinant();
        if !(ortho < tol) || !((det - T::one()).abs() < tol) {
            return Err(GeomError::NotARotation {
                ortho: crate::real::to_f64(ortho),
                det: crate::real::to_f64(det),
            });
        }
        Ok(Self(m))
    }

    /// Wraps `m` without validation. Callers guarantee orthonormality.
    pub fn from_matrix_unchecked(m: Matrix3<T>) -> Self {
        Self(m)
    }

    /// Nearest rotation in the Frobenius sense (SVD projection).
    pub fn project(m: &Matrix3<T>) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let mut d = Matrix3::identity();
        if (u * v_t).determinant() < T::zero() {
            d[(2, 2)] = -T::one();
        }
        Self(u * d * v_t)
    }

    pub fn rot_z(angle: T) -> Self {
        axis_angle_to_rotation(&Vector3::new(T::zero(), T::zero(), angle))
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self(self.0 * other.0)
    }

    pub fn apply(&self, p: &Vector3<T>) -> Vector3<T> {
        self.0 * p
    }

    pub fn to_axis_angle(&self) -> Vector3<T> {
        rotation_to_axis_angle(self)
    }

    pub fn to_quaternion(&self) -> UnitQuaternion<T> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.0))
    }

    pub fn from_quaternion(q: &UnitQuaternion<T>) -> Self {
        Self(*q.to_rotation_matrix().matrix())
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> T {
        rotation_to_axis_angle(self).norm()
    }

    pub fn cast<U: Real>(&self) -> RotationMatrix<U> {
        RotationMatrix(self.0.map(|x| lit::<U>(crate::real::to_f64(x))))
    }
}

/// Skew-symmetric cross-product matrix `[v]x`.
pub fn skew<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(
        T::zero(),
        -v.z,
        v.y,
        v.z,
        T::zero(),
        -v.x,
        -v.y,
        v.x,
        T::zero(),
    )
}

fn vee<T: Real>(m: &Matrix3<T>) -> Vector3<T> {
    Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}

/// Rodrigues map `exp([v]x)`.
pub fn axis_angle_to_rotation<T: Real>(v: &Vector3<T>) -> RotationMatrix<T> {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(v);
    let (a, b) = if theta < lit(1e-4) {
        (
            T::one() - theta2 / lit(6.0),
            lit::<T>(0.5) - theta2 / lit(24.0),
        )
    } else {
        (theta.sin() / theta, (T::one() - theta.cos()) / theta2)
    };
    RotationMatrix(Matrix3::identity() + k * a + k * k * b)
}

/// Inverse Rodrigues map. The result has norm in `[0, pi]`.
pub fn rotation_to_axis_angle<T: Real>(r: &RotationMatrix<T>) -> Vector3<T> {
    let m = &r.0;
    let w = vee(m);
    let s = w.norm() * lit(0.5);
    let c = ((m.trace() - T::one()) * lit(0.5)).clamp(-T::one(), T::one());
    let theta = s.atan2(c);

    if theta < lit(1e-4) {
        // sin(theta)/theta ~ 1 - theta^2/6
        return w * (lit::<T>(0.5) / (T::one() - theta * theta / lit(6.0)));
    }
    if c > lit(-0.9) {
        return w * (theta / (lit::<T>(2.0) * s));
    }

    // Near pi: read the axis from the symmetric part using the largest
    // diagonal element; the antisymmetric part only fixes the sign.
    let one_minus_c = T::one() - c;
    let mut i = 0;
    for d in 1..3 {
        if m[(d, d)] > m[(i, i)] {
            i = d;
        }
    }
    let mut n = Vector3::zeros();
    let ni = ((m[(i, i)] - c) / one_minus_c).max(T::zero()).sqrt();
    n[i] = ni;
    for j in 0..3 {
        if j != i {
            n[j] = (m[(i, j)] + m[(j, i)]) / (lit::<T>(2.0) * one_minus_c * ni);
        }
    }
    let n = n.normalize();
    let n = if n.dot(&w) < T::zero() { -n } else { n };
    n * theta
}

/// Left Jacobian of SO(3): `exp(v + d) ~ exp(J_l(v) d) exp(v)`.
pub fn left_jacobian<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(v);
    let (a, b) = if theta < lit(1e-4) {
        (
            lit::<T>(0.5) - theta2 / lit(24.0),
            lit::<T>(1.0 / 6.0) - theta2 / lit(120.0),
        )
    } else {
        (
            (T::one() - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Angle of `r_a^T r_b` in radians.
pub fn relative_angle<T: Real>(r_a: &RotationMatrix<T>, r_b: &RotationMatrix<T>) -> T {
    let rel = r_a.transpose().compose(r_b);
    rel.angle()
}

/// Angle of `r_a^T r_b` in degrees, in `[0, 180]`.
pub fn relative_angle_deg<T: Real>(r_a: &RotationMatrix<T>, r_b: &RotationMatrix<T>) -> T {
    relative_angle(r_a, r_b) * lit(180.0) / T::pi()
}

/// Rigid transform `p -> R p + t`. Translation in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose<T: Real> {
    pub rotation: RotationMatrix<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> Pose<T> {
    pub fn new(rotation: RotationMatrix<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(RotationMatrix::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<T>) -> Self {
        Self::new(RotationMatrix::identity(), t)
    }

    pub fn apply(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation.apply(p) + self.translation
    }

    /// `self * other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self::new(
            self.rotation.compose(&other.rotation),
            self.rotation.apply(&other.translation) + self.translation,
        )
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -rt.apply(&self.translation))
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|x| x.is_finite())
            && self.rotation.matrix().iter().all(|x| x.is_finite())
    }

    pub fn to_params(&self) -> PoseParams<T> {
        PoseParams {
            rotation: self.rotation.to_axis_angle(),
            translation: self.translation,
        }
    }

    /// Serialized form: `x y z qx qy qz qw`.
    pub fn to_array7(&self) -> [T; 7] {
        let q = self.rotation.to_quaternion();
        let t = &self.translation;
        [t.x, t.y, t.z, q.i, q.j, q.k, q.w]
    }

    /// Parses the 7-number form. The quaternion is normalized; a norm off
    /// by more than 1e-3 is rejected.
    pub fn from_array7(a: &[T; 7]) -> Result<Self, GeomError> {
        if a.iter().any(|x| !x.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        let q = Vector4::new(a[3], a[4], a[5], a[6]);
        let norm = q.norm();
        if (norm - T::one()).abs() > lit(1e-3) {
            return Err(GeomError::NonUnitQuaternion(crate::real::to_f64(norm)));
        }
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(a[6], a[3], a[4], a[5]));
        Ok(Self::new(
            RotationMatrix::from_quaternion(&q),
            Vector3::new(a[0], a[1], a[2]),
        ))
    }

    pub fn cast<U: Real>(&self) -> Pose<U> {
        Pose::new(
            self.rotation.cast(),
            self.translation.map(|x| lit::<U>(crate::real::to_f64(x))),
        )
    }
}

impl<T: Real> std::ops::Mul for Pose<T> {
    type Output = Pose<T>;

    fn mul(self, rhs: Self) -> Self::Output {
        self.compose(&rhs)
    }
}

impl<T: Real> fmt::Display for Pose<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.to_array7();
        write!(
            f,
            "t=({}, {}, {}) q=({}, {}, {}, {})",
            a[0], a[1], a[2], a[3], a[4], a[5], a[6]
        )
    }
}

/// Minimal 6-DoF parameterization: axis-angle rotation plus translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseParams<T: Real> {
    pub rotation: Vector3<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> PoseParams<T> {
    pub fn to_pose(&self) -> Pose<T> {
        Pose::new(axis_angle_to_rotation(&self.rotation), self.translation)
    }

    /// Maps the rotation vector back into the `||v|| <= pi` ball without
    /// changing the rotation it represents.
    pub fn canonicalize(&mut self) {
        let n = self.rotation.norm();
        if n > T::pi() {
            self.rotation *= T::one() - T::two_pi() / n;
        }
    }

    pub fn as_array(&self) -> [T; 6] {
        let r = &self.rotation;
        let t = &self.translation;
        [r.x, r.y, r.z, t.x, t.y, t.z]
    }

    pub fn from_slice(s: &[T]) -> Self {
        Self {
            rotation: Vector3::new(s[0], s[1], s[2]),
            translation: Vector3::new(s[3], s[4], s[5]),
        }
    }
}

/// Chordal L2 mean of rotations: dominant eigenvector of the quaternion
/// outer-product sum, with every quaternion sign-aligned to the first.
pub fn mean_rotation<T: Real>(rotations: &[RotationMatrix<T>]) -> Result<RotationMatrix<T>, GeomError> {
    let first = rotations.first().ok_or(GeomError::EmptyAverage)?.to_quaternion();
    let first = first.coords;
    let mut acc = Matrix4::<T>::zeros();
    for r in rotations {
        let mut q = r.to_quaternion().coords;
        if q.dot(&first) < T::zero() {
            q = -q;
        }
        acc += q * q.transpose();
    }
    let eig = SymmetricEigen::new(acc);
    let mut best = 0;
    for i in 1..4 {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let v = eig.eigenvectors.column(best).into_owned();
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(v));
    Ok(RotationMatrix::from_quaternion(&q))
}

/// Rotation by [`mean_rotation`], translation by arithmetic mean.
pub fn mean_pose<T: Real>(poses: &[Pose<T>]) -> Result<Pose<T>, GeomError> {
    if let [only] = poses {
        return Ok(*only);
    }
    let rots: Vec<_> = poses.iter().map(|p| p.rotation).collect();
    let rotation = mean_rotation(&rots)?;
    let mut t = Vector3::zeros();
    for p in poses {
        t += p.translation;
    }
    t /= lit::<T>(poses.len() as f64);
    Ok(Pose::new(rotation, t))
}
