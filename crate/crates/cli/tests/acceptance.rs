//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Runs the `handeye` binary for everything a user would script and
//! the library for the oracle checks.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Isometry3, Translation3, UnitQuaternion, Vector2, Vector3};
use serde_json::Value;

use handeye_core::camera::project;
use handeye_core::dataset::Dataset;
use handeye_core::geom::{axis_angle_to_rotation, Pose};
use handeye_core::init::{build_initial_guess, InitialGuess};
use handeye_core::io::{load_dataset, load_ground_truth};
use handeye_core::metrics::{all_board_poses, axzb_errors_on_dataset, HandEyeEstimate};
use handeye_core::solver::{solve, total_cost, ParameterBlock, Problem, SolverOptions};
use handeye_core::synth::{generate, SynthConfig, Workcell};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn handeye(args: &[&str]) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_handeye"))
        .args(args)
        .output()
        .expect("binary runs");
    (o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    assert!(n > 0, "median of nothing");
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Rank with ties sharing the mean position.
fn rank(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn rank_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ra, rb) = (rank(a), rank(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

/// Per-seed sweep rows keyed by method name.
struct Sweep {
    trials: Vec<HashMap<String, Value>>,
    seconds: f64,
}

impl Sweep {
    fn run(dir: &Path, name: &str, args: &[&str]) -> Sweep {
        let out = dir.join(format!("{name}.json"));
        let mut full = vec!["compare", "--out", p(&out)];
        full.extend_from_slice(args);
        let start = Instant::now();
        let (code, err) = handeye(&full);
        let seconds = start.elapsed().as_secs_f64();
        assert_eq!(code, 0, "sweep {name} failed: {err}");
        let report = read_json(&out);
        let trials = report["trials"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| {
                t["rows"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|r| (r["method"].as_str().unwrap().to_string(), r.clone()))
                    .collect()
            })
            .collect();
        Sweep { trials, seconds }
    }

    fn column(&self, method: &str, field: &str) -> Vec<f64> {
        self.trials
            .iter()
            .filter_map(|t| t.get(method).and_then(|r| r[field].as_f64()))
            .collect()
    }

    fn median_t(&self, method: &str) -> f64 {
        median(&self.column(method, "e_t_gt"))
    }

    fn converged(&self, method: &str) -> usize {
        self.trials
            .iter()
            .filter(|t| {
                t.get(method)
                    .is_some_and(|r| r["diverged"].is_null() && r["converged"].as_bool() == Some(true))
            })
            .count()
    }
}

fn criterion_1(dir: &Path) -> Verdict {
    let ds = dir.join("c1");
    let start = Instant::now();
    let (c1, e1) = handeye(&[
        "synth", "--preset", "large", "--sigma", "0", "--dropout", "0", "--cameras", "4", "--poses", "20", "--out",
        p(&ds),
    ]);
    let (c2, e2) = handeye(&["calibrate", "--dataset", p(&ds)]);
    let seconds = start.elapsed().as_secs_f64();
    if c1 != 0 || c2 != 0 {
        return verdict(false, format!("exit codes {c1}/{c2}: {e1}{e2}"));
    }
    let r = read_json(&ds.join("result.json"));
    let truth = load_ground_truth(&ds).unwrap().unwrap();
    let (mut et, mut er) = (0.0f64, 0.0f64);
    for (k, a) in r["hand_eye"].as_array().unwrap().iter().enumerate() {
        let a: [f64; 7] = serde_json::from_value(a.clone()).unwrap();
        let est = Pose::from_array7(&a).unwrap();
        let gt = &truth.hand_eye[k];
        et = et.max((est.translation - gt.translation).norm() * 1e3);
        let rel = est.rotation.matrix() * gt.rotation.matrix().transpose();
        let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        er = er.max(cos.acos().to_degrees());
    }
    let cost = r["cost"]["c_total"].as_f64().unwrap();
    verdict(
        et < 1e-3 && er < 1e-4 && cost < 1e-10 && seconds < 10.0,
        format!("max e_t {et:.2e} mm, max e_theta {er:.2e} deg, cost {cost:.2e} px^2, {seconds:.2} s"),
    )
}

fn criterion_2(l20: &Sweep, seconds: f64) -> Verdict {
    let (ours, no_cross, park) = (l20.median_t("ours"), l20.median_t("ours-no-cross"), l20.median_t("park"));
    verdict(
        ours < no_cross && ours < park && no_cross < park && seconds < 900.0,
        format!("median e_t_gt ours {ours:.4} mm, no-cross {no_cross:.4} mm, park {park:.4} mm, {seconds:.1} s"),
    )
}

fn criterion_3(l20: &Sweep) -> Verdict {
    let (shared, independent) = (l20.median_t("ours"), l20.median_t("ours-independent-Z"));
    verdict(
        shared <= independent,
        format!("median e_t_gt shared {shared:.4} mm, independent {independent:.4} mm"),
    )
}

fn criterion_4(dir: &Path) -> Verdict {
    let mut ours = Vec::new();
    let mut park = Vec::new();
    for preset in ["small", "medium", "large"] {
        let s = Sweep::run(dir, &format!("c4_{preset}"), &["--seed-sweep", "20", "--preset", preset, "--sigma", "0.5"]);
        ours.push(s.median_t("ours"));
        park.push(s.median_t("park"));
    }
    let park_monotone = park.windows(2).all(|w| w[0] <= w[1]);
    let (f_ours, f_park) = (ours[2] / ours[0], park[2] / park[0]);
    verdict(
        park_monotone && f_ours < f_park,
        format!(
            "park {:.3}/{:.3}/{:.3} mm (x{f_park:.2}), ours {:.3}/{:.3}/{:.3} mm (x{f_ours:.2})",
            park[0], park[1], park[2], ours[0], ours[1], ours[2]
        ),
    )
}

fn criterion_5(dir: &Path, l20: &Sweep) -> Verdict {
    let m8 = Sweep::run(
        dir,
        "c5_m8",
        &["--seed-sweep", "50", "--preset", "large", "--sigma", "0.5", "--dropout", "0.1", "--poses", "8"],
    );
    let converged = m8.converged("ours");
    let rate = converged as f64 / 50.0;
    let (m8_t, m20_t) = (m8.median_t("ours"), l20.median_t("ours"));
    verdict(
        rate >= 0.9 && m8_t < 3.0 * m20_t,
        format!(
            "ours converged {converged}/50, median e_t_gt {m8_t:.4} mm vs {m20_t:.4} mm at M=20 (x{:.2}); park {:.2} mm",
            m8_t / m20_t,
            m8.median_t("park")
        ),
    )
}

fn criterion_6(l20: &Sweep) -> Verdict {
    let mut rhos = Vec::new();
    for t in &l20.trials {
        let pairs: Option<Vec<(f64, f64)>> = ["ours", "tsai", "park"]
            .iter()
            .map(|m| {
                let r = t.get(*m)?;
                Some((r["e_t_axzb"].as_f64()?, r["e_t_gt"].as_f64()?))
            })
            .collect();
        if let Some(v) = pairs {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            if let Some(rho) = rank_correlation(&a, &b) {
                rhos.push(rho);
            }
        }
    }
    if rhos.is_empty() {
        return verdict(false, "no seed had all three methods complete");
    }
    let m = median(&rhos);
    verdict(m >= 0.8, format!("median Spearman {m:.3} over {} seeds", rhos.len()))
}

fn noiseless_config(seed: u64) -> SynthConfig {
    SynthConfig {
        workcell: Workcell::Large,
        pixel_noise_sigma: 0.0,
        detection_dropout: 0.0,
        seed,
        ..SynthConfig::default()
    }
}

fn criterion_7(dir: &Path) -> Verdict {
    let mut failures = Vec::new();

    // residual Jacobians against central differences
    let noisy = generate(&SynthConfig {
        workcell: Workcell::Large,
        seed: 31,
        ..SynthConfig::default()
    })
    .unwrap();
    let d = &noisy.dataset;
    let options = SolverOptions::default();
    let guess = build_initial_guess(d).unwrap();
    let x = ParameterBlock::from_guess(d, &guess, &options);
    let problem = Problem::new(d, x.layout.clone(), options.clone());
    let mut worst_jac = 0.0f64;
    for (bi, block) in problem.blocks.iter().enumerate().step_by(7) {
        let corner = bi % d.n_corners();
        let (_, jacs) = problem.corner_jacobian(block, corner, &x);
        for (b, j) in jacs {
            let mut fd = nalgebra::SMatrix::<f64, 2, 6>::zeros();
            for i in 0..6 {
                let h = 1e-6;
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp.values[6 * b + i] += h;
                xm.values[6 * b + i] -= h;
                let rp = problem.block_residuals(block, &xp)[corner];
                let rm = problem.block_residuals(block, &xm)[corner];
                fd.set_column(i, &((rp - rm) / (2.0 * h)));
            }
            worst_jac = worst_jac.max((fd - j).norm() / j.norm().max(1.0));
        }
    }
    if worst_jac >= 1e-4 {
        failures.push(format!("jacobian rel err {worst_jac:.2e}"));
    }

    // pose round trips through quaternion records and axis-angle parameters
    let mut worst_pose = 0.0f64;
    for v in [Vector3::new(0.3, -1.2, 2.0), Vector3::new(3.1, 0.01, -0.02), Vector3::new(1e-9, 0.0, 0.0)] {
        let pose = Pose::new(axis_angle_to_rotation(&v), Vector3::new(0.1, -0.4, 2.2));
        let via_record = Pose::from_array7(&pose.to_array7()).unwrap();
        let via_params = pose.to_params().to_pose();
        let back = pose.compose(&pose.inverse());
        for q in [via_record, via_params] {
            worst_pose = worst_pose
                .max((q.rotation.matrix() - pose.rotation.matrix()).amax())
                .max((q.translation - pose.translation).amax());
        }
        worst_pose = worst_pose
            .max((back.rotation.matrix() - nalgebra::Matrix3::identity()).amax())
            .max(back.translation.amax());
    }
    if worst_pose >= 1e-9 {
        failures.push(format!("pose round trip {worst_pose:.2e}"));
    }

    // generative consistency and the AX=ZB contract on ground truth
    let clean = generate(&noiseless_config(32)).unwrap();
    let cd = &clean.dataset;
    let truth_guess = InitialGuess::from_chain(cd, clean.truth.hand_eye.clone(), clean.truth.board_to_ee);
    let xt = ParameterBlock::from_guess(cd, &truth_guess, &options);
    let c = total_cost(&xt, cd, &options).c_total;
    if c >= 1e-12 {
        failures.push(format!("noiseless cost {c:.2e}"));
    }
    let bps = all_board_poses(cd).unwrap();
    let ax = axzb_errors_on_dataset(&HandEyeEstimate::from_truth(&clean.truth), cd, &bps).unwrap();
    if ax.e_t_mm >= 1e-6 || ax.e_theta_deg >= 1e-6 {
        failures.push(format!("AX=ZB on truth {:.2e} mm / {:.2e} deg", ax.e_t_mm, ax.e_theta_deg));
    }

    // cross-detection matrices against brute force
    for j in 0..d.n_poses() {
        let m = d.cross_matrix(j).unwrap();
        for k in 0..d.n_cameras() {
            for t in 0..d.n_cameras() {
                let expect = k != t && d.has_detection(j, k) && d.has_detection(j, t);
                if m.get(k, t) != expect {
                    failures.push(format!("cross matrix j={j} ({k},{t})"));
                }
            }
        }
    }

    // save/load round trip at 12 significant digits
    let root = dir.join("c7");
    noisy.save(&root).unwrap();
    let back = load_dataset(&root).unwrap();
    let mut worst_io = 0.0f64;
    for (j, k, corners) in d.detections() {
        for (a, b) in corners.iter().zip(back.detection(j, k).unwrap()) {
            worst_io = worst_io.max((a - b).amax() / a.amax());
        }
    }
    for (a, b) in d.robot_poses().iter().zip(back.robot_poses()) {
        worst_io = worst_io.max((a.translation - b.translation).amax());
    }
    if worst_io >= 1e-11 || back.detection_count() != d.detection_count() {
        failures.push(format!("save/load rel err {worst_io:.2e}"));
    }

    let detail = format!(
        "jacobian {worst_jac:.1e}, pose {worst_pose:.1e}, noiseless cost {c:.1e}, AX=ZB {:.1e} mm, io {worst_io:.1e}",
        ax.e_t_mm
    );
    if failures.is_empty() {
        verdict(true, detail)
    } else {
        verdict(false, format!("{detail}; failed: {}", failures.join(", ")))
    }
}

/// Minimizes the robust single-camera reprojection cost over `(X, Z)` with
/// finite-difference Jacobians and reweighted, damped Gauss-Newton steps.
fn single_camera_minimum(d: &Dataset<f64>, x0: &Pose<f64>, z0: &Pose<f64>, scale: f64) -> f64 {
    let iso = |p: &Pose<f64>| {
        let a = p.to_array7();
        Isometry3::from_parts(
            Translation3::new(a[0], a[1], a[2]),
            UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(a[6], a[3], a[4], a[5])),
        )
    };
    let (x0, z0) = (iso(x0), iso(z0));
    let robots: Vec<Isometry3<f64>> = d.robot_poses().iter().map(iso).collect();
    let board: Vec<Vector3<f64>> = d.board().corner_points();
    let intr = &d.cameras()[0];
    let apply = |base: &Isometry3<f64>, th: &[f64]| {
        let rot = UnitQuaternion::from_scaled_axis(Vector3::new(th[0], th[1], th[2])) * base.rotation;
        let t = base.translation.vector + Vector3::new(th[3], th[4], th[5]);
        Isometry3::from_parts(Translation3::from(t), rot)
    };
    let residuals = |th: &DVector<f64>| -> DVector<f64> {
        let x = apply(&x0, &th.as_slice()[0..6]);
        let z = apply(&z0, &th.as_slice()[6..12]);
        let mut r = Vec::new();
        for (j, _, corners) in d.detections() {
            let chain = x * robots[j] * z;
            for (q, obs) in board.iter().zip(corners) {
                let pc = chain.transform_point(&(*q).into()).coords;
                let px: Vector2<f64> = project(&pc, intr).expect("in front of camera");
                r.extend_from_slice(&[px.x - obs.x, px.y - obs.y]);
            }
        }
        DVector::from_vec(r)
    };
    let c2 = scale * scale;
    let cost = |r: &DVector<f64>| -> f64 {
        r.as_slice()
            .chunks(2)
            .map(|e| c2 * (1.0 + (e[0] * e[0] + e[1] * e[1]) / c2).ln())
            .sum()
    };
    let mut th = DVector::<f64>::zeros(12);
    let mut r = residuals(&th);
    let mut f = cost(&r);
    let mut mu = 1e-3;
    for _ in 0..500 {
        let mut jac = DMatrix::<f64>::zeros(r.len(), 12);
        for i in 0..12 {
            let h = 1e-7;
            let (mut tp, mut tm) = (th.clone(), th.clone());
            tp[i] += h;
            tm[i] -= h;
            jac.set_column(i, &((residuals(&tp) - residuals(&tm)) / (2.0 * h)));
        }
        let mut w = DVector::<f64>::zeros(r.len());
        for (i, e) in r.as_slice().chunks(2).enumerate() {
            let wi = 1.0 / (1.0 + (e[0] * e[0] + e[1] * e[1]) / c2);
            w[2 * i] = wi;
            w[2 * i + 1] = wi;
        }
        let wj = DMatrix::from_fn(jac.nrows(), 12, |a, b| jac[(a, b)] * w[a]);
        let h = jac.transpose() * &wj;
        let g = wj.transpose() * &r;
        let mut improved = false;
        while mu < 1e12 {
            let mut damped = h.clone();
            for i in 0..12 {
                damped[(i, i)] += mu * h[(i, i)];
            }
            let step = damped.lu().solve(&(-&g)).expect("solvable");
            let trial = &th + &step;
            let rt = residuals(&trial);
            let ft = cost(&rt);
            if ft < f {
                let rel = (f - ft) / f;
                th = trial;
                r = rt;
                f = ft;
                mu = (mu * 0.3).max(1e-12);
                improved = rel > 1e-16;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    f
}

fn criterion_8() -> Verdict {
    let out = generate(&SynthConfig {
        n_cameras: 1,
        n_poses: 15,
        workcell: Workcell::Medium,
        seed: 41,
        ..SynthConfig::default()
    })
    .unwrap();
    let d = &out.dataset;
    let guess = build_initial_guess(d).unwrap();
    let options = SolverOptions::default();
    let result = solve(d, &guess, &options).unwrap();
    let reference = single_camera_minimum(d, &guess.hand_eye[0], &guess.board_to_ee, options.cauchy_scale);
    let ours = result.cost.c_total;
    let rel = (ours - reference).abs() / reference;
    verdict(
        result.cost.c_cross == 0.0 && rel < 1e-9,
        format!("c_cross {}, cost {ours:.12e} vs reference {reference:.12e} (rel {rel:.1e})", result.cost.c_cross),
    )
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_9(dir: &Path) -> Verdict {
    let (a, b) = (dir.join("c9a"), dir.join("c9b"));
    for ds in [&a, &b] {
        let (code, err) = handeye(&["synth", "--preset", "large", "--seed", "7", "--out", p(ds)]);
        assert_eq!(code, 0, "{err}");
    }
    let synth_same = tree(&a) == tree(&b);
    let strip = |path: &Path| {
        let mut v = read_json(path);
        v.as_object_mut().unwrap().remove("wall_time_s");
        v
    };
    let (ra, rb) = (dir.join("c9_r1.json"), dir.join("c9_r2.json"));
    for r in [&ra, &rb] {
        let (code, err) = handeye(&["calibrate", "--dataset", p(&a), "--out", p(r)]);
        assert!(code == 0 || code == 3, "{err}");
    }
    let calib_same = strip(&ra) == strip(&rb);
    verdict(
        synth_same && calib_same,
        format!("synth directories identical: {synth_same}; result files identical modulo wall time: {calib_same}"),
    )
}

fn criterion_10(dir: &Path) -> Verdict {
    let ds = dir.join("c10");
    let (code, err) = handeye(&["synth", "--cameras", "4", "--poses", "30", "--seed", "10", "--out", p(&ds)]);
    assert_eq!(code, 0, "{err}");
    let d = load_dataset(&ds).unwrap();
    let start = Instant::now();
    let (code, err) = handeye(&["calibrate", "--dataset", p(&ds)]);
    let seconds = start.elapsed().as_secs_f64();
    verdict(
        code == 0 && seconds < 60.0 && d.n_corners() == 12,
        format!(
            "{} cameras x {} poses x {} corners in {seconds:.3} s, exit {code} {err}",
            d.n_cameras(),
            d.n_poses(),
            d.n_corners()
        ),
    )
}

fn main() {
    // `cargo test -- --list` and similar harness probes pass flags; nothing to list
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let l20 = Sweep::run(
        dir,
        "l20",
        &["--seed-sweep", "50", "--preset", "large", "--sigma", "0.5", "--dropout", "0.1", "--poses", "20"],
    );
    let verdicts = [
        (1, criterion_1(dir)),
        (2, criterion_2(&l20, l20.seconds)),
        (3, criterion_3(&l20)),
        (4, criterion_4(dir)),
        (5, criterion_5(dir, &l20)),
        (6, criterion_6(&l20)),
        (7, criterion_7(dir)),
        (8, criterion_8()),
        (9, criterion_9(dir)),
        (10, criterion_10(dir)),
    ];
    let mut failed = 0;
    for (n, v) in &verdicts {
        println!("criterion {n:>2}: {} - {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
