//! Cauchy robust loss and the residual/Jacobian corrector used to fold it
//! into Gauss-Newton normal equations.

use crate::real::{lit, Real};

/// `c^2 log(1 + s / c^2)` for squared residual norm `s` and scale `c`.
pub fn cauchy_cost<T: Real>(squared_norm: T, scale: T) -> T {
    let c2 = scale * scale;
    c2 * (squared_norm / c2).ln_1p()
}

/// `(rho(s), rho'(s), rho''(s))` of the Cauchy loss.
pub fn cauchy_derivatives<T: Real>(squared_norm: T, scale: T) -> (T, T, T) {
    let c2 = scale * scale;
    let inv = T::one() / (T::one() + squared_norm / c2);
    (cauchy_cost(squared_norm, scale), inv, -inv * inv / c2)
}

/// Scales a residual block and its Jacobian so that the plain least-squares
/// model of the corrected block matches the robust cost to second order
/// (Triggs et al.). For losses with non-positive curvature, which includes
/// Cauchy everywhere, this reduces to a `sqrt(rho')` reweighting.
#[derive(Clone, Copy, Debug)]
pub struct Corrector<T: Real> {
    sqrt_rho1: T,
    residual_scaling: T,
    alpha_sq_norm: T,
}

impl<T: Real> Corrector<T> {
    pub fn new(squared_norm: T, rho1: T, rho2: T) -> Self {
        let sqrt_rho1 = rho1.sqrt();
        if squared_norm == T::zero() || rho2 <= T::zero() {
            return Self {
                sqrt_rho1,
                residual_scaling: sqrt_rho1,
                alpha_sq_norm: T::zero(),
            };
        }
        let d = T::one() + lit::<T>(2.0) * squared_norm * rho2 / rho1;
        let alpha = T::one() - d.sqrt();
        Self {
            sqrt_rho1,
            residual_scaling: sqrt_rho1 / (T::one() - alpha),
            alpha_sq_norm: alpha / squared_norm,
        }
    }

    pub fn residual_scaling(&self) -> T {
        self.residual_scaling
    }

    /// Corrected Jacobian row pair: `sqrt(rho') (I - alpha r r^T / |r|^2) J`.
    pub fn correct_jacobian<const C: usize>(
        &self,
        residual: &nalgebra::Vector2<T>,
        jac: &nalgebra::SMatrix<T, 2, C>,
    ) -> nalgebra::SMatrix<T, 2, C> {
        if self.alpha_sq_norm == T::zero() {
            return jac * self.sqrt_rho1;
        }
        let rtj = residual.transpose() * jac;
        (jac - residual * rtj * self.alpha_sq_norm) * self.sqrt_rho1
    }
}
