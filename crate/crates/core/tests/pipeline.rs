use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use handeye_core::dataset::DatasetError;
use handeye_core::io::{load_dataset, load_ground_truth};
use handeye_core::metrics::{compare_methods, Method};
use handeye_core::solver::{total_cost, ParameterBlock, SolverOptions};
use handeye_core::init::InitialGuess;
use handeye_core::synth::{generate, preset, SynthConfig, Workcell};

fn noiseless(seed: u64, n_poses: usize) -> SynthConfig {
    SynthConfig {
        n_poses,
        workcell: Workcell::Large,
        pixel_noise_sigma: 0.0,
        detection_dropout: 0.0,
        seed,
        ..SynthConfig::default()
    }
}

fn read_tree(root: &Path) -> HashMap<String, Vec<u8>> {
    let mut out = HashMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn synthetic_dataset_round_trips_through_disk() {
    let out = generate(&SynthConfig {
        workcell: Workcell::Large,
        seed: 21,
        ..SynthConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.save(dir.path()).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    let d = &out.dataset;
    assert_eq!((back.n_poses(), back.n_cameras(), back.n_corners()), (d.n_poses(), d.n_cameras(), d.n_corners()));
    assert_eq!(back.detection_count(), d.detection_count());
    for (j, k, corners) in d.detections() {
        for (a, b) in corners.iter().zip(back.detection(j, k).unwrap()) {
            assert!((a - b).amax() <= 1e-11 * a.amax().max(1.0));
        }
    }
    for (a, b) in d.robot_poses().iter().zip(back.robot_poses()) {
        assert!((a.translation - b.translation).amax() < 1e-11);
        assert!((a.rotation.matrix() - b.rotation.matrix()).amax() < 1e-11);
    }
    let gt = load_ground_truth(dir.path()).unwrap().unwrap();
    assert_eq!(gt.hand_eye.len(), d.n_cameras());
}

#[test]
fn same_seed_gives_byte_identical_directories() {
    let c = SynthConfig {
        workcell: Workcell::Large,
        seed: 7,
        ..SynthConfig::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate(&c).unwrap().save(a.path()).unwrap();
    generate(&c).unwrap().save(b.path()).unwrap();
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);
}

#[test]
fn co_visible_pairs_match_brute_force() {
    let out = generate(&noiseless(4, 30)).unwrap();
    let d = &out.dataset;
    let sets: Vec<BTreeSet<usize>> = (0..d.n_cameras())
        .map(|k| (0..d.n_poses()).filter(|&j| d.detection(j, k).is_some()).collect())
        .collect();
    let mut brute = BTreeSet::new();
    for k in 0..d.n_cameras() {
        for t in 0..d.n_cameras() {
            if k != t && !sets[k].is_disjoint(&sets[t]) {
                brute.insert((k, t));
            }
        }
    }
    assert_eq!(d.co_visible_pairs(), brute);
    let entries: usize = (0..d.n_poses()).map(|j| d.cross_matrix(j).unwrap().nonzero_count()).sum();
    let brute_entries: usize = (0..d.n_poses())
        .map(|j| {
            let seen = sets.iter().filter(|s| s.contains(&j)).count();
            seen * seen.saturating_sub(1)
        })
        .sum();
    assert_eq!(entries, brute_entries);
}

#[test]
fn noiseless_data_is_consistent_with_truth() {
    for name in ["small", "medium", "large"] {
        let c = SynthConfig {
            pixel_noise_sigma: 0.0,
            detection_dropout: 0.0,
            seed: 2,
            ..preset(name).unwrap()
        };
        let out = generate(&c).unwrap();
        let guess = InitialGuess::from_chain(&out.dataset, out.truth.hand_eye.clone(), out.truth.board_to_ee);
        let options = SolverOptions::default();
        let x = ParameterBlock::from_guess(&out.dataset, &guess, &options);
        let cost = total_cost(&x, &out.dataset, &options);
        assert!(cost.c_total < 1e-12, "{name}: {cost:?}");
    }
}

#[test]
fn comparison_on_noiseless_data() {
    let out = generate(&noiseless(5, 20)).unwrap();
    let rows = compare_methods(&out.dataset, Some(&out.truth), &SolverOptions::default()).unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows.iter().map(|r| r.method).collect::<Vec<_>>(), Method::ALL.to_vec());
    for r in &rows {
        assert!(r.completed(), "{r:?}");
        assert!(r.runtime > 0.0);
        assert!(r.e_t_gt.unwrap() < 0.01, "{r:?}");
    }
    let without_truth = compare_methods(&out.dataset, None, &SolverOptions::default()).unwrap();
    assert!(without_truth.iter().all(|r| r.e_t_gt.is_none() && r.e_t_axzb.is_some()));
}

#[test]
fn failing_method_is_isolated() {
    let out = generate(&noiseless(6, 20)).unwrap();
    let broken = SolverOptions {
        max_iterations: 100,
        cauchy_scale: -1.0,
        ..SolverOptions::default()
    };
    let rows = compare_methods(&out.dataset, Some(&out.truth), &broken).unwrap();
    for r in &rows {
        match r.method {
            Method::Tsai | Method::Park => assert!(r.completed()),
            _ => {
                assert!(!r.completed());
                assert!(r.e_t_gt.is_none());
                assert!(r.runtime > 0.0);
            }
        }
    }
}

#[test]
fn missing_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_dataset(dir.path().join("nope")).unwrap_err();
    assert!(matches!(err, DatasetError::Io { .. }), "{err}");
}
