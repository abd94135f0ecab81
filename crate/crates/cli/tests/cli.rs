//! End-to-end tests of the pipeline binary: exit codes, file outputs and
//! byte-level reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_bmdkit")
}

fn run(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("failed to spawn bmdkit")
}

fn assert_exit(output: &Output, code: i32, context: &str) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "{context}: stdout={} stderr={}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bmdkit-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, text: &str) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, text).unwrap();
}

fn synth_config(dir: &Path, cohort: &Path, cases: usize, seed: u64) -> PathBuf {
    let path = dir.join("run.cfg");
    write(
        &path,
        &format!(
            "cohort_dir = {}\nseed = {}\nsynth_cases = {}\nsynth_grid = 16\nsynth_spacing_mm = 4.0\nsynth_noise_sigma_hu = 0\nthreshold_grid_size = 16\n",
            cohort.display(),
            seed,
            cases
        ),
    );
    path
}

#[test]
fn unknown_subcommand_exits_1() {
    let out = run(&["frobnicate"]);
    assert_exit(&out, 1, "unknown subcommand");
    assert!(!out.stderr.is_empty());
}

#[test]
fn help_exits_0_and_lists_subcommands() {
    let out = run(&["--help"]);
    assert_exit(&out, 0, "--help");
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in [
        "synth",
        "calibrate",
        "project",
        "register",
        "tune-threshold",
        "fit-bmd",
        "predict",
        "evaluate",
        "losses-check",
    ] {
        assert!(text.contains(sub), "help does not mention {sub}");
    }
}

#[test]
fn predict_with_missing_calibration_exits_2() {
    let dir = workdir("missing-cal");
    let manifest = dir.join("manifest.csv");
    write(&manifest, "case_id,pose,drr,gt_bmd\nc0,standing,nope.i2h,1.0\n");
    let out = run(&[
        "predict",
        "--manifest",
        manifest.to_str().unwrap(),
        "--calibration",
        dir.join("does_not_exist.txt").to_str().unwrap(),
        "--out",
        dir.join("table.csv").to_str().unwrap(),
    ]);
    assert_exit(&out, 2, "missing calibration");
    assert!(!dir.join("table.csv").exists(), "no output on failure");
}

#[test]
fn register_with_empty_volume_exits_3() {
    let dir = workdir("reg-fail");
    // Flat volume: registration has no gradient signal anywhere.
    let n = 8usize;
    let mut payload = Vec::new();
    for _ in 0..n * n * n {
        payload.extend_from_slice(&0.0f64.to_le_bytes());
    }
    write(
        &dir.join("flat.v3h"),
        "dims: 8 8 8\nspacing: 4 4 4\norigin: 0 0 0\nunit: density_mg_cm3\ndtype: f64le\ndata: flat.v3r\n",
    );
    std::fs::write(dir.join("flat.v3r"), &payload).unwrap();
    let mut xray_payload = Vec::new();
    for i in 0..(24 * 24) {
        xray_payload.extend_from_slice(&((i % 5) as f64).to_le_bytes());
    }
    write(
        &dir.join("xray.i2h"),
        "dims: 24 24\nspacing: 4 4\nunit: dimensionless\ndtype: f64le\ndata: xray.i2r\n",
    );
    std::fs::write(dir.join("xray.i2r"), &xray_payload).unwrap();
    write(
        &dir.join("geom.cfg"),
        "mode = parallel\ndetector_dims = 24 24\ndetector_spacing = 4 4\ndetector_center = 14 120 14\nbasis_u = 1 0 0\nbasis_v = 0 0 1\nray_dir = 0 1 0\nstep_mm = 2\n",
    );
    write(
        &dir.join("run.cfg"),
        &format!(
            "seed = 3\ngeometry = {}\ncma_max_evaluations = 50\n",
            dir.join("geom.cfg").display()
        ),
    );
    let out = run(&[
        "register",
        "--config",
        dir.join("run.cfg").to_str().unwrap(),
        "--xray",
        dir.join("xray.i2h").to_str().unwrap(),
        "--volume",
        dir.join("flat.v3h").to_str().unwrap(),
        "--init",
        "0,0,0,0,0,0",
        "--out",
        dir.join("pose.txt").to_str().unwrap(),
    ]);
    assert_exit(&out, 3, "registration failure");
}

/// Full pipeline on a tiny cohort: synth, calibrate, project (two poses),
/// tune, fit, predict, evaluate.
#[test]
fn pipeline_end_to_end() {
    let dir = workdir("pipeline");
    let cohort = dir.join("cohort");
    let cfg = synth_config(&dir, &cohort, 5, 9);
    assert_exit(&run(&["synth", "--config", cfg.to_str().unwrap()]), 0, "synth");
    assert!(cohort.join("truth_all.csv").exists());

    // Geometry matching the 16^3 x 4 mm volumes (64 mm extent).
    let geom = dir.join("geom.cfg");
    write(
        &geom,
        "mode = parallel\ndetector_dims = 16 16\ndetector_spacing = 4 4\ndetector_center = 30 -20 30\nbasis_u = 1 0 0\nbasis_v = 0 0 1\nray_dir = 0 1 0\nstep_mm = 1\n",
    );

    let truth: Vec<(String, f64)> = std::fs::read_to_string(cohort.join("truth_all.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            (f[0].to_string(), f[1].parse::<f64>().unwrap())
        })
        .collect();
    assert_eq!(truth.len(), 5);

    let mut tune_manifest = String::from("drr,gt_bmd\n");
    let mut predict_manifest = String::from("case_id,pose,drr,gt_bmd\n");
    for (case_id, vbmd) in &truth {
        let case_dir = cohort.join(case_id);
        let qct = dir.join(format!("{case_id}_qct.v3h"));
        let line = dir.join(format!("{case_id}_line.txt"));
        assert_exit(
            &run(&[
                "calibrate",
                "--rods",
                case_dir.join("rods.csv").to_str().unwrap(),
                "--volume",
                case_dir.join("volume.v3h").to_str().unwrap(),
                "--out-volume",
                qct.to_str().unwrap(),
                "--out-line",
                line.to_str().unwrap(),
            ]),
            0,
            "calibrate",
        );
        for pose in ["standing", "supine"] {
            let drr = dir.join(format!("{case_id}_{pose}.i2h"));
            assert_exit(
                &run(&[
                    "project",
                    "--volume",
                    qct.to_str().unwrap(),
                    "--mask",
                    case_dir.join("mask_pf.v3h").to_str().unwrap(),
                    "--geometry",
                    geom.to_str().unwrap(),
                    "--pose-file",
                    case_dir.join("poses.csv").to_str().unwrap(),
                    "--pose-name",
                    pose,
                    "--out",
                    drr.to_str().unwrap(),
                ]),
                0,
                "project",
            );
            predict_manifest.push_str(&format!(
                "{case_id},{pose},{},{vbmd}\n",
                drr.file_name().unwrap().to_string_lossy()
            ));
            if pose == "standing" {
                tune_manifest.push_str(&format!(
                    "{},{vbmd}\n",
                    drr.file_name().unwrap().to_string_lossy()
                ));
            }
        }
    }
    let tune_path = dir.join("tune_manifest.csv");
    write(&tune_path, &tune_manifest);
    let predict_path = dir.join("predict_manifest.csv");
    write(&predict_path, &predict_manifest);

    let curve = dir.join("curve.csv");
    let threshold = dir.join("threshold.txt");
    assert_exit(
        &run(&[
            "tune-threshold",
            "--config",
            cfg.to_str().unwrap(),
            "--manifest",
            tune_path.to_str().unwrap(),
            "--out-curve",
            curve.to_str().unwrap(),
            "--out-threshold",
            threshold.to_str().unwrap(),
        ]),
        0,
        "tune-threshold",
    );
    assert!(curve.exists() && threshold.exists());

    let cal = dir.join("cal.txt");
    assert_exit(
        &run(&[
            "fit-bmd",
            "--manifest",
            tune_path.to_str().unwrap(),
            "--threshold",
            threshold.to_str().unwrap(),
            "--target",
            "qct",
            "--out",
            cal.to_str().unwrap(),
        ]),
        0,
        "fit-bmd",
    );

    let table = dir.join("table.csv");
    assert_exit(
        &run(&[
            "predict",
            "--manifest",
            predict_path.to_str().unwrap(),
            "--calibration",
            cal.to_str().unwrap(),
            "--out",
            table.to_str().unwrap(),
        ]),
        0,
        "predict",
    );

    let out_dir = dir.join("metrics");
    assert_exit(
        &run(&[
            "evaluate",
            "--table",
            table.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]),
        0,
        "evaluate",
    );
    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("metric,value\n"));
    for key in ["pcc,", "mae,", "see,", "icc2_1,", "rms_cv_percent,"] {
        assert!(metrics.contains(key), "metrics.csv missing {key}: {metrics}");
    }
    assert!(out_dir.join("bland_altman.csv").exists());

    // The synthetic cohort is clean, so predictions track truth tightly.
    let pcc: f64 = metrics
        .lines()
        .find(|l| l.starts_with("pcc,"))
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(pcc > 0.99, "end-to-end pcc {pcc}");
}

#[test]
fn losses_check_writes_passing_report() {
    let dir = workdir("losses");
    let report = dir.join("report.csv");
    let out = run(&["losses-check", "--out", report.to_str().unwrap()]);
    assert_exit(&out, 0, "losses-check");
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.starts_with("kernel,trials,max_rel_err,status\n"));
    assert_eq!(text.matches(",pass").count(), 2, "{text}");
}

#[test]
fn seeded_synth_runs_are_byte_identical() {
    let dir = workdir("determinism");
    let cohort_a = dir.join("a");
    let cohort_b = dir.join("b");
    let cfg_a = dir.join("a.cfg");
    let cfg_b = dir.join("b.cfg");
    write(
        &cfg_a,
        &format!(
            "cohort_dir = {}\nseed = 77\nsynth_cases = 2\nsynth_grid = 16\nsynth_spacing_mm = 4.0\n",
            cohort_a.display()
        ),
    );
    write(
        &cfg_b,
        &format!(
            "cohort_dir = {}\nseed = 77\nsynth_cases = 2\nsynth_grid = 16\nsynth_spacing_mm = 4.0\n",
            cohort_b.display()
        ),
    );
    assert_exit(&run(&["synth", "--config", cfg_a.to_str().unwrap()]), 0, "synth a");
    assert_exit(&run(&["synth", "--config", cfg_b.to_str().unwrap()]), 0, "synth b");

    fn walk(dir: &Path, base: &Path, files: &mut Vec<PathBuf>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, base, files);
            } else {
                files.push(path.strip_prefix(base).unwrap().to_path_buf());
            }
        }
    }
    let mut files_a = Vec::new();
    walk(&cohort_a, &cohort_a, &mut files_a);
    files_a.sort();
    assert!(!files_a.is_empty());
    for rel in &files_a {
        let a = std::fs::read(cohort_a.join(rel)).unwrap();
        let b = std::fs::read(cohort_b.join(rel)).unwrap();
        assert_eq!(a, b, "{} differs between identically seeded runs", rel.display());
    }
}

#[test]
fn config_rejects_unknown_keys() {
    let dir = workdir("badcfg");
    let cfg = dir.join("bad.cfg");
    write(&cfg, "seed = 1\nwibble = 2\n");
    let out = run(&["synth", "--config", cfg.to_str().unwrap()]);
    assert_exit(&out, 2, "unknown config key");
}
