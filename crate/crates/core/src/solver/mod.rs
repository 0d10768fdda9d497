//! Joint multi-camera hand-eye refinement.
//!
//! Unknowns are every camera's `T_W^Ck`, the shared board-to-end-effector
//! `T_B^E` and one `T_Ct^Ck` per ordered co-visible pair. The cost is the sum
//! of Cauchy-robust reprojection terms (board seen directly by camera `k`)
//! and cross terms (board reprojected into camera `k` through camera `t`).

mod lm;
pub mod loss;
pub mod problem;
mod result;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use nalgebra::Vector2;

use crate::dataset::Dataset;
use crate::init::InitialGuess;
use crate::real::Real;

pub use lm::{solve, solve_problem};
pub use loss::{cauchy_cost, cauchy_derivatives, Corrector};
pub use problem::{BlockKind, CostReport, ParamLayout, ParameterBlock, Problem, ResidualBlock};
pub use result::{
    load_result, save_result, CalibrationResult, IterationRecord, PairConsistency, ResultRecord, Termination,
};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("numerical failure: damped normal equations unsolvable at maximum damping")]
    NumericalFailure { last: Box<CalibrationResult<f64>> },
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("no residual block for pose {pose}, camera {camera}{}", through.map(|t| format!(" through camera {t}")).unwrap_or_default())]
    MissingBlock {
        pose: usize,
        camera: usize,
        through: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub parameter_tolerance: f64,
    /// Relative cost decrease below which an accepted step ends the solve.
    pub cost_tolerance: f64,
    /// Cauchy scale in pixels.
    pub cauchy_scale: f64,
    pub cross_term_enabled: bool,
    pub shared_z_enabled: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tolerance: 1e-10,
            parameter_tolerance: 1e-10,
            cost_tolerance: 1e-12,
            cauchy_scale: 1.0,
            cross_term_enabled: true,
            shared_z_enabled: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = [
            ("gradient_tolerance", self.gradient_tolerance),
            ("parameter_tolerance", self.parameter_tolerance),
            ("cost_tolerance", self.cost_tolerance),
            ("cauchy_scale", self.cauchy_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolverError::InvalidOptions(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

fn options_for(params_layout: &ParamLayout) -> SolverOptions {
    SolverOptions {
        cross_term_enabled: !params_layout.pairs().is_empty(),
        shared_z_enabled: params_layout.shared_z(),
        ..SolverOptions::default()
    }
}

/// Per-corner residual of camera `k` observing the board at pose `j`.
pub fn residual_rpj<T: Real>(
    j: usize,
    k: usize,
    params: &ParameterBlock<T>,
    dataset: &Dataset<T>,
) -> Result<Vec<Vector2<T>>, SolverError> {
    if !dataset.has_detection(j, k) {
        return Err(SolverError::MissingBlock {
            pose: j,
            camera: k,
            through: None,
        });
    }
    let problem = Problem::new(dataset, params.layout.clone(), options_for(&params.layout));
    let block = ResidualBlock {
        pose: j,
        camera: k,
        kind: BlockKind::Reprojection,
    };
    Ok(problem.block_residuals(&block, params))
}

/// Per-corner residual of camera `k` at pose `j` with the board reached
/// through camera `t`'s chain and `T_Ct^Ck`.
pub fn residual_cross<T: Real>(
    j: usize,
    k: usize,
    t: usize,
    params: &ParameterBlock<T>,
    dataset: &Dataset<T>,
) -> Result<Vec<Vector2<T>>, SolverError> {
    let missing = SolverError::MissingBlock {
        pose: j,
        camera: k,
        through: Some(t),
    };
    let gated = dataset.cross_matrix(j).map(|x| x.get(k, t)).unwrap_or(false);
    if !gated || params.layout.pair_block(k, t).is_none() {
        return Err(missing);
    }
    let problem = Problem::new(dataset, params.layout.clone(), options_for(&params.layout));
    let block = ResidualBlock {
        pose: j,
        camera: k,
        kind: BlockKind::Cross { through: t },
    };
    Ok(problem.block_residuals(&block, params))
}

/// Robust cost of `params`; cross blocks are only counted when enabled.
pub fn total_cost<T: Real>(params: &ParameterBlock<T>, dataset: &Dataset<T>, options: &SolverOptions) -> CostReport<T> {
    Problem::new(dataset, params.layout.clone(), options.clone()).cost(params)
}

/// Parameters with the chain-consistent `T_Ct^Ck` implied by `guess`.
pub fn params_from_guess<T: Real>(
    dataset: &Dataset<T>,
    guess: &InitialGuess<T>,
    options: &SolverOptions,
) -> ParameterBlock<T> {
    ParameterBlock::from_guess(dataset, guess, options)
}
