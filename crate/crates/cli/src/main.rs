mod commands;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use handeye_core::solver::SolverOptions;

#[derive(Parser, Debug)]
#[command(name = "handeye", version, about = "Multi-camera hand-eye calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic dataset with ground truth.
    Synth(SynthArgs),
    /// Initialize and refine every camera's hand-eye transform.
    Calibrate(CalibrateArgs),
    /// Score a result file against a dataset.
    Evaluate(EvaluateArgs),
    /// Run every method on a dataset, or over seeded synthetic trials.
    Compare(CompareArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SceneArgs {
    /// Workcell preset: small, medium or large.
    #[arg(long, default_value = "medium")]
    pub preset: String,
    /// Camera ring radius in meters; overrides the preset's.
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub cameras: Option<usize>,
    #[arg(long)]
    pub poses: Option<usize>,
    /// Per-coordinate corner noise, pixels.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Probability of dropping a visible detection.
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    /// Cauchy loss scale, pixels.
    #[arg(long)]
    pub cauchy_scale: Option<f64>,
    /// Disable the cross-camera residuals.
    #[arg(long)]
    pub no_cross: bool,
    /// Give each camera its own board-to-end-effector transform.
    #[arg(long)]
    pub independent_z: bool,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub gradient_tol: Option<f64>,
    #[arg(long)]
    pub parameter_tol: Option<f64>,
    #[arg(long)]
    pub cost_tol: Option<f64>,
}

impl SolverArgs {
    pub fn options(&self) -> SolverOptions {
        let d = SolverOptions::default();
        SolverOptions {
            max_iterations: self.max_iters.unwrap_or(d.max_iterations),
            gradient_tolerance: self.gradient_tol.unwrap_or(d.gradient_tolerance),
            parameter_tolerance: self.parameter_tol.unwrap_or(d.parameter_tolerance),
            cost_tolerance: self.cost_tol.unwrap_or(d.cost_tolerance),
            cauchy_scale: self.cauchy_scale.unwrap_or(d.cauchy_scale),
            cross_term_enabled: !self.no_cross,
            shared_z_enabled: !self.independent_z,
        }
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Result file; defaults to `<dataset>/result.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accepted for interface uniformity; calibration is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Result file; defaults to `<dataset>/result.json`.
    #[arg(long)]
    pub result: Option<PathBuf>,
    /// Report file; defaults to `<dataset>/evaluation.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Dataset to compare on; required unless `--seed-sweep` is given.
    #[arg(long, required_unless_present = "seed_sweep")]
    pub dataset: Option<PathBuf>,
    /// Report file (JSON); a `.txt` table is written next to it. Defaults
    /// to `<dataset>/comparison.json`, or `sweep.json` for sweeps.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run K synthetic trials with seeds `seed..seed+K` and report medians.
    #[arg(long, value_name = "K", conflicts_with = "dataset")]
    pub seed_sweep: Option<u64>,
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Calibrate(a) => commands::calibrate(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Compare(a) => match a.seed_sweep {
            Some(k) => sweep::run(&a, k),
            None => commands::compare(&a),
        },
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
