use std::fmt::Display;
use std::path::{Path, PathBuf};

use handeye_core::dataset::{Dataset, DatasetError};
use handeye_core::init::build_initial_guess;
use handeye_core::io::{load_dataset, load_ground_truth, to_json_pretty};
use handeye_core::metrics::{
    all_board_poses, compare_methods, evaluate_estimate, format_table, HandEyeEstimate, Method, MetricsReport,
};
use handeye_core::solver::{save_result, solve, CalibrationResult, SolverError, SolverOptions};
use handeye_core::synth::{generate, preset, SynthConfig, SynthError, Workcell};

use crate::{CalibrateArgs, CompareArgs, EvaluateArgs, SceneArgs, SynthArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn invalid(e: impl Display) -> Self {
        Self {
            code: EXIT_INVALID,
            message: e.to_string(),
        }
    }

    pub fn io(e: impl Display) -> Self {
        Self {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }

    /// Errors reading user-supplied inputs: missing files and malformed
    /// content are validation failures, anything else is I/O.
    pub fn input(e: DatasetError) -> Self {
        match &e {
            DatasetError::Io { source, .. } if source.kind() != std::io::ErrorKind::NotFound => Self::io(e),
            _ => Self::invalid(e),
        }
    }
}

pub type CmdResult = Result<u8, CliError>;

pub fn synth_config(scene: &SceneArgs, seed: u64) -> Result<SynthConfig, CliError> {
    let base = preset(&scene.preset).map_err(CliError::invalid)?;
    let config = SynthConfig {
        n_cameras: scene.cameras.unwrap_or(base.n_cameras),
        n_poses: scene.poses.unwrap_or(base.n_poses),
        workcell: scene.radius.map(Workcell::Radius).unwrap_or(base.workcell),
        pixel_noise_sigma: scene.sigma.unwrap_or(base.pixel_noise_sigma),
        detection_dropout: scene.dropout.unwrap_or(base.detection_dropout),
        seed,
        ..base
    };
    config.validate().map_err(CliError::invalid)?;
    Ok(config)
}

pub fn synth_error(e: SynthError) -> CliError {
    match e {
        SynthError::Dataset(e) => CliError::io(e),
        other => CliError::invalid(other),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

pub fn synth(args: &SynthArgs) -> CmdResult {
    let config = synth_config(&args.scene, args.scene.seed)?;
    let out = generate(&config).map_err(synth_error)?;
    out.save(&args.out).map_err(CliError::io)?;
    let d = &out.dataset;
    println!(
        "wrote {} ({} cameras, {} poses, {} corners per board, ring radius {} m)",
        args.out.display(),
        d.n_cameras(),
        d.n_poses(),
        d.n_corners(),
        config.workcell.radius()
    );
    println!("detections: {} of {}", d.detection_count(), d.n_cameras() * d.n_poses());
    for (k, n) in out.visibility_stats.iter().enumerate() {
        println!("  camera {k}: {n} poses");
    }
    println!("co-visible ordered pairs: {}", d.co_visible_pairs().len());
    Ok(EXIT_OK)
}

fn print_result(r: &CalibrationResult<f64>) {
    println!(
        "termination: {:?} after {} iterations ({:.3} s)",
        r.termination, r.iterations, r.wall_time
    );
    println!("initial cost: {:.6e}", r.initial_cost);
    println!(
        "final cost:   {:.6e} (reprojection {:.6e}, cross {:.6e}, {} residuals)",
        r.cost.c_total, r.cost.c_rpj, r.cost.c_cross, r.cost.residual_count
    );
    println!("per-camera RMS reprojection [px]:");
    for (k, rms) in r.per_camera_rms_reprojection.iter().enumerate() {
        println!("  camera {k}: {rms:.4}");
    }
}

pub fn calibrate(args: &CalibrateArgs) -> CmdResult {
    let options = args.solver.options();
    options.validate().map_err(CliError::invalid)?;
    let d = load_dataset(&args.dataset).map_err(CliError::input)?;
    let out = args.out.clone().unwrap_or_else(|| args.dataset.join("result.json"));
    let guess = build_initial_guess(&d).map_err(CliError::invalid)?;
    let (result, failure) = match solve(&d, &guess, &options) {
        Ok(r) => (r, None),
        Err(SolverError::NumericalFailure { last }) => (*last, Some("numerical failure in the damped solve")),
        Err(e) => return Err(CliError::invalid(e)),
    };
    save_result(&result, &out).map_err(CliError::io)?;
    print_result(&result);
    println!("wrote {}", out.display());
    if let Some(msg) = failure {
        eprintln!("error: {msg}");
        return Ok(EXIT_NOT_CONVERGED);
    }
    if !result.converged {
        eprintln!("warning: solver did not converge ({:?})", result.termination);
        return Ok(EXIT_NOT_CONVERGED);
    }
    Ok(EXIT_OK)
}

/// The solver variant that produced a result, read off its options.
fn method_of(options: &SolverOptions) -> Method {
    if !options.shared_z_enabled {
        Method::OursIndependentZ
    } else if !options.cross_term_enabled {
        Method::OursNoCross
    } else {
        Method::Ours
    }
}

pub fn evaluate(args: &EvaluateArgs) -> CmdResult {
    let d = load_dataset(&args.dataset).map_err(CliError::input)?;
    let result_path = args.result.clone().unwrap_or_else(|| args.dataset.join("result.json"));
    let result = handeye_core::solver::load_result(&result_path).map_err(CliError::input)?;
    if result.hand_eye.len() != d.n_cameras() {
        return Err(CliError::invalid(format!(
            "{} has {} cameras, dataset has {}",
            result_path.display(),
            result.hand_eye.len(),
            d.n_cameras()
        )));
    }
    let truth = load_ground_truth(&args.dataset).map_err(CliError::input)?;
    let board_poses = all_board_poses(&d).map_err(CliError::invalid)?;
    let report = evaluate_estimate(
        method_of(&result.options),
        &HandEyeEstimate::from_result(&result),
        &d,
        &board_poses,
        truth.as_ref(),
        result.wall_time,
        result.converged,
    )
    .map_err(CliError::invalid)?;
    let out = args.out.clone().unwrap_or_else(|| args.dataset.join("evaluation.json"));
    write_text(&out, &to_json_pretty(&report))?;
    print!("{}", format_table(std::slice::from_ref(&report)));
    print_per_camera(&report);
    println!("wrote {}", out.display());
    Ok(EXIT_OK)
}

fn print_per_camera(r: &MetricsReport) {
    let columns = [
        ("e_t_gt[mm]", &r.per_camera_t_gt),
        ("e_theta_gt[deg]", &r.per_camera_theta_gt),
        ("e_t_axzb[mm]", &r.per_camera_t_axzb),
        ("e_theta_axzb[deg]", &r.per_camera_theta_axzb),
    ];
    for (name, values) in columns {
        if let Some(v) = values {
            let cells: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
            println!("  per camera {name}: {}", cells.join(" "));
        }
    }
}

/// Text table path written alongside a JSON report.
pub fn table_path(json: &Path) -> PathBuf {
    json.with_extension("txt")
}

fn compare_dataset(d: &Dataset<f64>, dir: &Path, options: &SolverOptions) -> Result<Vec<MetricsReport>, CliError> {
    let truth = load_ground_truth(dir).map_err(CliError::input)?;
    compare_methods(d, truth.as_ref(), options).map_err(CliError::invalid)
}

pub fn compare(args: &CompareArgs) -> CmdResult {
    let dir = args.dataset.as_ref().expect("clap requires --dataset without --seed-sweep");
    let options = args.solver.options();
    options.validate().map_err(CliError::invalid)?;
    let d = load_dataset(dir).map_err(CliError::input)?;
    let rows = compare_dataset(&d, dir, &options)?;
    let out = args.out.clone().unwrap_or_else(|| dir.join("comparison.json"));
    let table = format_table(&rows);
    write_text(&out, &to_json_pretty(&rows))?;
    write_text(&table_path(&out), &table)?;
    print!("{table}");
    println!("wrote {} and {}", out.display(), table_path(&out).display());
    if rows.iter().any(MetricsReport::completed) {
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_NOT_CONVERGED)
    }
}
