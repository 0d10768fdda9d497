//! `compare --seed-sweep K`: K synthetic trials, medians per method.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use handeye_core::io::to_json_pretty;
use handeye_core::metrics::{compare_methods, median, spearman, Method, MetricsReport};
use handeye_core::solver::SolverOptions;
use handeye_core::synth::{generate, SynthConfig};

use crate::commands::{synth_config, synth_error, table_path, write_text, CliError, CmdResult, EXIT_NOT_CONVERGED, EXIT_OK};
use crate::CompareArgs;

/// Methods whose AX=ZB and ground-truth translation errors are rank-correlated.
pub const RANK_METHODS: [Method; 3] = [Method::Ours, Method::Tsai, Method::Park];

#[derive(Debug, Serialize)]
struct SweepConfig {
    preset: String,
    ring_radius_m: f64,
    cameras: usize,
    poses: usize,
    sigma_px: f64,
    dropout: f64,
    first_seed: u64,
    trials: u64,
    solver: SolverOptions,
}

#[derive(Debug, Serialize)]
struct Trial {
    seed: u64,
    /// Set when no dataset could be generated for this seed.
    skipped: Option<String>,
    rows: Vec<MetricsReport>,
    /// Spearman correlation of AX=ZB vs ground-truth translation error over
    /// the rank methods; absent unless all of them completed.
    spearman_t: Option<f64>,
}

#[derive(Debug, Serialize)]
struct MethodSummary {
    method: Method,
    trials: usize,
    completed: usize,
    converged: usize,
    median_e_t_gt: Option<f64>,
    median_e_theta_gt: Option<f64>,
    median_e_t_axzb: Option<f64>,
    median_e_theta_axzb: Option<f64>,
    median_runtime: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SweepReport {
    config: SweepConfig,
    summary: Vec<MethodSummary>,
    median_spearman_t: Option<f64>,
    trials: Vec<Trial>,
}

fn run_trial(config: &SynthConfig, options: &SolverOptions) -> Result<Trial, CliError> {
    let out = match generate(config) {
        Ok(out) => out,
        Err(e @ handeye_core::synth::SynthError::Exhausted { .. }) => {
            return Ok(Trial {
                seed: config.seed,
                skipped: Some(e.to_string()),
                rows: Vec::new(),
                spearman_t: None,
            })
        }
        Err(e) => return Err(synth_error(e)),
    };
    let rows = compare_methods(&out.dataset, Some(&out.truth), options).map_err(CliError::invalid)?;
    let ranked: Option<Vec<(f64, f64)>> = RANK_METHODS
        .iter()
        .map(|m| {
            let r = rows.iter().find(|r| r.method == *m)?;
            Some((r.e_t_axzb?, r.e_t_gt?))
        })
        .collect();
    let spearman_t = ranked.and_then(|v| {
        let (ax, gt): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        spearman(&ax, &gt)
    });
    Ok(Trial {
        seed: config.seed,
        skipped: None,
        rows,
        spearman_t,
    })
}

/// Runs trials on all available cores; results keep seed order.
fn run_trials(configs: &[SynthConfig], options: &SolverOptions) -> Result<Vec<Trial>, CliError> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(configs.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<Trial, CliError>>>> = Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(config) = configs.get(i) else { break };
                let trial = run_trial(config, options);
                slots.lock().expect("no worker panicked")[i] = Some(trial);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|t| t.expect("every trial ran"))
        .collect()
}

fn summarize(method: Method, trials: &[Trial]) -> MethodSummary {
    let rows: Vec<&MetricsReport> = trials
        .iter()
        .flat_map(|t| t.rows.iter().filter(|r| r.method == method))
        .collect();
    let column = |f: fn(&MetricsReport) -> Option<f64>| median(&rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
    MethodSummary {
        method,
        trials: rows.len(),
        completed: rows.iter().filter(|r| r.completed()).count(),
        converged: rows.iter().filter(|r| r.completed() && r.converged).count(),
        median_e_t_gt: column(|r| r.e_t_gt),
        median_e_theta_gt: column(|r| r.e_theta_gt),
        median_e_t_axzb: column(|r| r.e_t_axzb),
        median_e_theta_axzb: column(|r| r.e_theta_axzb),
        median_runtime: column(|r| Some(r.runtime)),
    }
}

fn format_summary(report: &SweepReport) -> String {
    let c = &report.config;
    let cell = |v: Option<f64>, p: usize| v.map(|x| format!("{x:.p$}")).unwrap_or_else(|| "-".into());
    let mut out = format!(
        "{} trials, preset {} (radius {} m), {} cameras, {} poses, sigma {} px, dropout {}, seeds {}..{}\n",
        c.trials,
        c.preset,
        c.ring_radius_m,
        c.cameras,
        c.poses,
        c.sigma_px,
        c.dropout,
        c.first_seed,
        c.first_seed + c.trials
    );
    let mut lines = vec![[
        "method",
        "med e_t_gt[mm]",
        "med e_theta_gt[deg]",
        "med e_t_axzb[mm]",
        "med e_theta_axzb[deg]",
        "med time[s]",
        "completed",
        "converged",
    ]
    .map(String::from)
    .to_vec()];
    for s in &report.summary {
        lines.push(vec![
            s.method.name().to_string(),
            cell(s.median_e_t_gt, 4),
            cell(s.median_e_theta_gt, 5),
            cell(s.median_e_t_axzb, 4),
            cell(s.median_e_theta_axzb, 5),
            cell(s.median_runtime, 3),
            format!("{}/{}", s.completed, s.trials),
            format!("{}/{}", s.converged, s.trials),
        ]);
    }
    let widths: Vec<usize> = (0..lines[0].len())
        .map(|i| lines.iter().map(|l| l[i].len()).max().unwrap_or(0))
        .collect();
    for l in &lines {
        let cells: Vec<String> = l
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (s, w))| if i == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    let names: Vec<&str> = RANK_METHODS.iter().map(|m| m.name()).collect();
    out.push_str(&format!(
        "median Spearman(e_t_axzb, e_t_gt) over {}: {}\n",
        names.join("/"),
        cell(report.median_spearman_t, 3)
    ));
    let skipped = report.trials.iter().filter(|t| t.skipped.is_some()).count();
    if skipped > 0 {
        out.push_str(&format!("skipped seeds (no valid dataset): {skipped}\n"));
    }
    out
}

pub fn run(args: &CompareArgs, k: u64) -> CmdResult {
    if k == 0 {
        return Err(CliError::invalid("--seed-sweep needs at least one trial"));
    }
    let options = args.solver.options();
    options.validate().map_err(CliError::invalid)?;
    let first = synth_config(&args.scene, args.scene.seed)?;
    let configs: Vec<SynthConfig> = (0..k)
        .map(|i| SynthConfig {
            seed: args.scene.seed.wrapping_add(i),
            ..first.clone()
        })
        .collect();
    let trials = run_trials(&configs, &options)?;
    let spearmans: Vec<f64> = trials.iter().filter_map(|t| t.spearman_t).collect();
    let report = SweepReport {
        config: SweepConfig {
            preset: args.scene.preset.clone(),
            ring_radius_m: first.workcell.radius(),
            cameras: first.n_cameras,
            poses: first.n_poses,
            sigma_px: first.pixel_noise_sigma,
            dropout: first.detection_dropout,
            first_seed: args.scene.seed,
            trials: k,
            solver: options,
        },
        summary: Method::ALL.iter().map(|&m| summarize(m, &trials)).collect(),
        median_spearman_t: median(&spearmans),
        trials,
    };
    let out = args.out.clone().unwrap_or_else(|| "sweep.json".into());
    let table = format_summary(&report);
    write_text(&out, &to_json_pretty(&report))?;
    write_text(&table_path(&out), &table)?;
    print!("{table}");
    println!("wrote {} and {}", out.display(), table_path(&out).display());
    if report.summary.iter().any(|s| s.completed > 0) {
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_NOT_CONVERGED)
    }
}
