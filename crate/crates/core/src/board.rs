//! Planar checkerboard model.
//!
//! Board frame: origin at corner 0, x along columns, y along rows, z out of
//! the plane. Corners are indexed row-major, `i = r * cols + c`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::{lit, Real};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid board: {0}")]
pub struct BoardError(pub String);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoardModel<T: Real> {
    pub rows: usize,
    pub cols: usize,
    /// Corner spacing in meters.
    #[serde(rename = "spacing_m")]
    pub spacing: T,
}

impl<T: Real> BoardModel<T> {
    pub fn new(rows: usize, cols: usize, spacing: T) -> Result<Self, BoardError> {
        let b = Self { rows, cols, spacing };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), BoardError> {
        if self.rows < 2 || self.cols < 2 {
            return Err(BoardError(format!(
                "need at least 2x2 inner corners, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.spacing > T::zero()) || !self.spacing.is_finite() {
            return Err(BoardError("spacing must be positive".into()));
        }
        Ok(())
    }

    /// Number of corners `L`.
    pub fn corner_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn corner_points(&self) -> Vec<Vector3<T>> {
        corner_points(self)
    }

    /// Geometric center of the corner grid.
    pub fn center(&self) -> Vector3<T> {
        let half: T = lit(0.5);
        Vector3::new(
            self.spacing * lit((self.cols - 1) as f64) * half,
            self.spacing * lit((self.rows - 1) as f64) * half,
            T::zero(),
        )
    }
}

pub fn corner_points<T: Real>(b: &BoardModel<T>) -> Vec<Vector3<T>> {
    let mut pts = Vec::with_capacity(b.corner_count());
    for r in 0..b.rows {
        for c in 0..b.cols {
            pts.push(Vector3::new(
                b.spacing * lit(c as f64),
                b.spacing * lit(r as f64),
                T::zero(),
            ));
        }
    }
    pts
}
