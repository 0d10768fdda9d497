//! Pinhole projection with 5-parameter Brown-Conrady distortion.

use nalgebra::{Matrix2, Matrix2x3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::{lit, Real};

/// Depth at or below which a point counts as behind the camera.
pub const MIN_DEPTH: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("point is behind the camera (z = {0})")]
    PointBehindCamera(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    /// `k1, k2, p1, p2, k3`
    pub dist: [T; 5],
    pub width: u32,
    pub height: u32,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        dist: [T; 5],
        width: u32,
        height: u32,
    ) -> Result<Self, CameraError> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            dist,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        let w: T = lit(self.width as f64);
        let h: T = lit(self.height as f64);
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(CameraError::InvalidIntrinsics("focal lengths must be positive".into()));
        }
        if !(self.cx >= T::zero() && self.cx < w && self.cy >= T::zero() && self.cy < h) {
            return Err(CameraError::InvalidIntrinsics(
                "principal point must lie inside the image".into(),
            ));
        }
        if self.dist.iter().any(|d| !d.is_finite()) {
            return Err(CameraError::InvalidIntrinsics("non-finite distortion".into()));
        }
        Ok(())
    }

    pub fn image_diagonal(&self) -> T {
        let w: T = lit(self.width as f64);
        let h: T = lit(self.height as f64);
        (w * w + h * h).sqrt()
    }

    /// Applies distortion to normalized coordinates.
    pub fn distort(&self, xn: &Vector2<T>) -> Vector2<T> {
        let [k1, k2, p1, p2, k3] = self.dist;
        let (x, y) = (xn.x, xn.y);
        let two: T = lit(2.0);
        let r2 = x * x + y * y;
        let radial = T::one() + r2 * (k1 + r2 * (k2 + r2 * k3));
        Vector2::new(
            x * radial + two * p1 * x * y + p2 * (r2 + two * x * x),
            y * radial + p1 * (r2 + two * y * y) + two * p2 * x * y,
        )
    }

    /// Jacobian of [`distort`](Self::distort) w.r.t. the normalized point.
    fn distort_jacobian(&self, xn: &Vector2<T>) -> Matrix2<T> {
        let [k1, k2, p1, p2, k3] = self.dist;
        let (x, y) = (xn.x, xn.y);
        let two: T = lit(2.0);
        let r2 = x * x + y * y;
        let radial = T::one() + r2 * (k1 + r2 * (k2 + r2 * k3));
        // d radial / d r2
        let dradial = k1 + r2 * (two * k2 + lit::<T>(3.0) * r2 * k3);
        let dr2_dx = two * x;
        let dr2_dy = two * y;
        let six: T = lit(6.0);
        Matrix2::new(
            radial + x * dradial * dr2_dx + two * p1 * y + six * p2 * x,
            x * dradial * dr2_dy + two * p1 * x + two * p2 * y,
            y * dradial * dr2_dx + two * p1 * x + two * p2 * y,
            radial + y * dradial * dr2_dy + six * p1 * y + two * p2 * x,
        )
    }

    /// Inverts [`distort`](Self::distort) by fixed-point iteration
    /// (10 iterations).
    pub fn undistort(&self, xd: &Vector2<T>) -> Vector2<T> {
        let [k1, k2, p1, p2, k3] = self.dist;
        let two: T = lit(2.0);
        let mut p = *xd;
        for _ in 0..10 {
            let (x, y) = (p.x, p.y);
            let r2 = x * x + y * y;
            let radial = T::one() + r2 * (k1 + r2 * (k2 + r2 * k3));
            let dx = two * p1 * x * y + p2 * (r2 + two * x * x);
            let dy = p1 * (r2 + two * y * y) + two * p2 * x * y;
            p = Vector2::new((xd.x - dx) / radial, (xd.y - dy) / radial);
        }
        p
    }

    /// Pixel to undistorted normalized image coordinates.
    pub fn normalize_pixel(&self, px: &Vector2<T>) -> Vector2<T> {
        let xd = Vector2::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy);
        self.undistort(&xd)
    }

    pub fn project(&self, p_cam: &Vector3<T>) -> Result<Vector2<T>, CameraError> {
        project(p_cam, self)
    }

    pub fn cast<U: Real>(&self) -> CameraIntrinsics<U> {
        let c = |x: T| lit::<U>(crate::real::to_f64(x));
        CameraIntrinsics {
            fx: c(self.fx),
            fy: c(self.fy),
            cx: c(self.cx),
            cy: c(self.cy),
            dist: self.dist.map(c),
            width: self.width,
            height: self.height,
        }
    }
}

/// Projects a camera-frame point to pixels. The result may fall outside the
/// image; see [`in_image`].
pub fn project<T: Real>(p_cam: &Vector3<T>, intr: &CameraIntrinsics<T>) -> Result<Vector2<T>, CameraError> {
    if !(p_cam.z > lit(MIN_DEPTH)) {
        return Err(CameraError::PointBehindCamera(crate::real::to_f64(p_cam.z)));
    }
    let xn = Vector2::new(p_cam.x / p_cam.z, p_cam.y / p_cam.z);
    let xd = intr.distort(&xn);
    Ok(Vector2::new(intr.fx * xd.x + intr.cx, intr.fy * xd.y + intr.cy))
}

/// Projection and its 2x3 Jacobian w.r.t. the camera-frame point.
pub fn project_with_jacobian<T: Real>(
    p_cam: &Vector3<T>,
    intr: &CameraIntrinsics<T>,
) -> Result<(Vector2<T>, Matrix2x3<T>), CameraError> {
    if !(p_cam.z > lit(MIN_DEPTH)) {
        return Err(CameraError::PointBehindCamera(crate::real::to_f64(p_cam.z)));
    }
    let inv_z = T::one() / p_cam.z;
    let xn = Vector2::new(p_cam.x * inv_z, p_cam.y * inv_z);
    let xd = intr.distort(&xn);
    let px = Vector2::new(intr.fx * xd.x + intr.cx, intr.fy * xd.y + intr.cy);

    let dn_dp = Matrix2x3::new(
        inv_z,
        T::zero(),
        -xn.x * inv_z,
        T::zero(),
        inv_z,
        -xn.y * inv_z,
    );
    let k = Matrix2::new(intr.fx, T::zero(), T::zero(), intr.fy);
    Ok((px, k * intr.distort_jacobian(&xn) * dn_dp))
}

/// `0 <= u < width` and `0 <= v < height`.
pub fn in_image<T: Real>(px: &Vector2<T>, intr: &CameraIntrinsics<T>) -> bool {
    px.x >= T::zero()
        && px.x < lit(intr.width as f64)
        && px.y >= T::zero()
        && px.y < lit(intr.height as f64)
}
