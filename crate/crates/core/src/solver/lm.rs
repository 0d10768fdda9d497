use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::problem::{ParameterBlock, Problem};
use super::result::{consistency_gaps, CalibrationResult, IterationRecord, Termination};
use super::{SolverError, SolverOptions};
use crate::dataset::Dataset;
use crate::geom::{mean_pose, Pose};
use crate::init::{chain_cam_to_cam, InitialGuess};
use crate::real::{lit, to_f64, Real};

const LAMBDA_MIN: f64 = 1e-12;
const LAMBDA_MAX: f64 = 1e12;

fn damped_solve<T: Real>(h: &DMatrix<T>, g: &DVector<T>, lambda: T) -> Option<DVector<T>> {
    let mut a = h.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    let chol = a.cholesky()?;
    let delta = -chol.solve(g);
    delta.iter().all(|v| v.is_finite()).then_some(delta)
}

fn max_abs<T: Real>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Levenberg-Marquardt on the joint robust cost, starting from `initial`.
///
/// Damping starts at `1e-4 * max diag(J^T J)`, halves on every accepted step
/// and quadruples on every rejected one, clamped to `[1e-12, 1e12]`.
pub fn solve<T: Real>(
    dataset: &Dataset<T>,
    initial: &InitialGuess<T>,
    options: &SolverOptions,
) -> Result<CalibrationResult<T>, SolverError> {
    options.validate()?;
    let x = ParameterBlock::from_guess(dataset, initial, options);
    let problem = Problem::new(dataset, x.layout.clone(), options.clone());
    solve_problem(&problem, x)
}

/// Runs the minimization on an already assembled problem; residual blocks
/// are accumulated in `problem.blocks` order.
pub fn solve_problem<T: Real>(
    problem: &Problem<'_, T>,
    mut x: ParameterBlock<T>,
) -> Result<CalibrationResult<T>, SolverError> {
    let options = &problem.options;
    options.validate()?;
    let dataset = problem.dataset;
    let start = Instant::now();
    x.canonicalize();

    let gtol: T = lit(options.gradient_tolerance);
    let ptol: T = lit(options.parameter_tolerance);
    let ctol: T = lit(options.cost_tolerance);
    let lambda_min: T = lit(LAMBDA_MIN);
    let lambda_max: T = lit(LAMBDA_MAX);

    let mut lin = problem.linearize(&x);
    // Costs compared across steps all come from the same evaluation path.
    let initial_cost = problem.cost(&x).c_total;
    let mut cost = initial_cost;
    let max_diag = (0..lin.hessian.nrows()).fold(T::zero(), |m, i| m.max(lin.hessian[(i, i)]));
    let mut lambda = (max_diag * lit(1e-4)).max(lambda_min).min(lambda_max);
    let mut log = Vec::new();
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    if max_abs(&lin.gradient) <= gtol {
        termination = Termination::GradientTolerance;
    } else {
        'outer: while iterations < options.max_iterations {
            iterations += 1;
            let delta = loop {
                match damped_solve(&lin.hessian, &lin.gradient, lambda) {
                    Some(d) => break d,
                    None if lambda >= lambda_max => {
                        termination = Termination::NumericalFailure;
                        break 'outer;
                    }
                    None => lambda = (lambda * lit(4.0)).min(lambda_max),
                }
            };
            let step_norm = delta.norm();
            if step_norm <= ptol * (x.values.norm() + ptol) {
                log.push(IterationRecord {
                    iteration: iterations,
                    cost: to_f64(cost),
                    lambda: to_f64(lambda),
                    step_norm: to_f64(step_norm),
                    accepted: false,
                });
                termination = Termination::ParameterTolerance;
                break;
            }
            let mut trial = x.clone();
            trial.values += &delta;
            trial.canonicalize();
            let trial_cost = problem.cost(&trial).c_total;
            let accepted = trial_cost.is_finite() && trial_cost <= cost;
            log.push(IterationRecord {
                iteration: iterations,
                cost: to_f64(if accepted { trial_cost } else { cost }),
                lambda: to_f64(lambda),
                step_norm: to_f64(step_norm),
                accepted,
            });
            if accepted {
                let decrease = cost - trial_cost;
                x = trial;
                lin = problem.linearize(&x);
                let previous = cost;
                cost = trial_cost;
                lambda = (lambda * lit(0.5)).max(lambda_min);
                if decrease <= ctol * previous {
                    termination = Termination::CostTolerance;
                    break;
                }
                if max_abs(&lin.gradient) <= gtol {
                    termination = Termination::GradientTolerance;
                    break;
                }
            } else if lambda >= lambda_max {
                termination = Termination::DampingLimit;
                break;
            } else {
                lambda = (lambda * lit(4.0)).min(lambda_max);
            }
        }
    }

    let result = assemble(dataset, problem, &x, options, initial_cost, iterations, termination, log, start);
    if termination == Termination::NumericalFailure {
        return Err(SolverError::NumericalFailure {
            last: Box::new(result.cast()),
        });
    }
    Ok(result)
}

#[allow(clippy::too_many_arguments)]
fn assemble<T: Real>(
    dataset: &Dataset<T>,
    problem: &Problem<'_, T>,
    x: &ParameterBlock<T>,
    options: &SolverOptions,
    initial_cost: T,
    iterations: usize,
    termination: Termination,
    log: Vec<IterationRecord>,
    start: Instant,
) -> CalibrationResult<T> {
    let n = dataset.n_cameras();
    let hand_eye: Vec<Pose<T>> = (0..n).map(|k| x.hand_eye(k)).collect();
    let per_camera: Vec<Pose<T>> = (0..n).map(|k| x.board_to_ee(k)).collect();
    let board_to_ee = if x.layout.shared_z() {
        per_camera[0]
    } else {
        mean_pose(&per_camera).unwrap_or(per_camera[0])
    };
    let (cam_to_cam, consistency) = if x.layout.pairs().is_empty() {
        (chain_cam_to_cam(dataset, &hand_eye), Vec::new())
    } else {
        let c2c: BTreeMap<(usize, usize), Pose<T>> = x
            .layout
            .pairs()
            .iter()
            .map(|&(k, t)| ((k, t), x.cam_to_cam(k, t).expect("pair in layout")))
            .collect();
        let gaps = consistency_gaps(&hand_eye, &c2c);
        (c2c, gaps)
    };
    let cost = problem.cost(x);
    CalibrationResult {
        hand_eye,
        board_to_ee,
        board_to_ee_per_camera: per_camera,
        cam_to_cam,
        initial_cost,
        final_cost: cost.c_total,
        cost,
        iterations,
        converged: termination.is_convergence(),
        termination,
        wall_time: start.elapsed().as_secs_f64(),
        per_camera_rms_reprojection: problem.rms_per_camera(x),
        consistency,
        options: options.clone(),
        log,
    }
}
