//! Exit-code contract and output-format checks for the binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fragkin")
}

fn run_cli(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary launches")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fragkin_cli_{}_{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_sim_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

const SIM_CONFIG: &str = r#"{
  "kernel": {"type": "power_law", "alpha": 1.0, "C": 1.0},
  "grid": {"r_min": 1e-3, "r_max": 10.0, "nodes": 64},
  "initial": {"type": "narrow_bump", "r0": 1.0, "width": 0.15},
  "volume": 1.0,
  "t_end": 5.0,
  "sample_times": [0.0, 5.0]
}"#;

#[test]
fn missing_config_exits_2_and_names_path() {
    let output = run_cli(&[
        "simulate",
        "--config",
        "/no/such/config.json",
        "--out",
        "/tmp",
    ]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("/no/such/config.json"), "stderr: {stderr}");
}

#[test]
fn invalid_config_exits_2() {
    let dir = scratch("invalid");
    let config = write_sim_config(&dir, r#"{"kernel": {"type": "power_law"}}"#);
    let output = run_cli(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn rejected_parameters_exit_2() {
    let dir = scratch("params");
    let config = write_sim_config(
        &dir,
        &SIM_CONFIG.replace(r#""alpha": 1.0"#, r#""alpha": -1.0"#),
    );
    let output = run_cli(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn unwritable_output_exits_4() {
    let dir = scratch("unwritable");
    let config = write_sim_config(&dir, SIM_CONFIG);
    let output = run_cli(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        "/proc/fragkin_cannot_write_here",
    ]);
    assert_eq!(output.status.code(), Some(4));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn simulate_writes_expected_files() {
    let dir = scratch("files");
    let config = write_sim_config(&dir, SIM_CONFIG);
    let out = dir.join("out");
    let output = run_cli(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "stderr: {:?}", output.stderr);

    let observables = std::fs::read_to_string(out.join("observables.csv")).unwrap();
    assert!(observables.starts_with("t,N,lambda,S,V,V_lost\n"));
    assert_eq!(observables.lines().count(), 3); // header + 2 samples

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["tool"], "fragkin");
    assert_eq!(manifest["command"], "simulate");
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(outputs.len() >= 3, "manifest lists {} files", outputs.len());
    for name in outputs {
        assert!(out.join(name.as_str().unwrap()).exists());
    }
    assert!(out.join("summary.json").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn analyze_of_limit_law_snapshot_reports_tiny_distance() {
    // Write a snapshot holding the limit law itself; analysis against the
    // same shape must come back with a near-zero distance.
    let dir = scratch("limitsnap");
    let grid = fragkin::SizeGrid::logarithmic(1e-4, 60.0, 512).unwrap();
    let mut body = String::from("# t = 7.5\nr,n\n");
    for &r in grid.nodes() {
        let f = fragkin::limit_density(1.0, r).unwrap();
        body.push_str(&format!("{r},{f}\n"));
    }
    let snap = dir.join("snap.csv");
    std::fs::write(&snap, body).unwrap();

    let out = dir.join("out");
    let output = run_cli(&[
        "analyze",
        "--alpha",
        "1.0",
        "--out",
        out.to_str().unwrap(),
        snap.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "stderr: {:?}", output.stderr);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let entry = &report["snapshots"][0];
    assert_eq!(entry["t"], 7.5);
    assert!(entry["ks"].as_f64().unwrap() <= 2e-4);
    assert!((entry["alpha_hat"].as_f64().unwrap() - 1.0).abs() < 0.05);

    let rescaled = std::fs::read_to_string(out.join("rescaled_snap.csv")).unwrap();
    assert!(rescaled.starts_with("x,g,f_limit\n"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn analyze_rejects_empty_snapshot_with_exit_3() {
    let dir = scratch("emptysnap");
    let grid = fragkin::SizeGrid::logarithmic(1e-3, 10.0, 64).unwrap();
    let mut body = String::from("r,n\n");
    for &r in grid.nodes() {
        body.push_str(&format!("{r},0\n"));
    }
    let snap = dir.join("empty.csv");
    std::fs::write(&snap, body).unwrap();
    let output = run_cli(&[
        "analyze",
        "--alpha",
        "1.0",
        "--out",
        dir.join("out").to_str().unwrap(),
        snap.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn asympt_matches_closed_forms() {
    let output = run_cli(&[
        "asympt",
        "--alpha",
        "0.0",
        "--coeff",
        "1.0",
        "--volume",
        "1.0",
        "--t-start",
        "12.0",
        "--t-end",
        "24.0",
        "--points",
        "2",
    ]);
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("t,S,lambda,N,M3"));
    // S(12) = 12/(3·4) = 1 for the alpha = 0 oracle parameters
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "12");
    assert_eq!(first[1], "1");
}

#[test]
fn kernel_reports_moment_table() {
    let output = run_cli(&["kernel", "--alpha", "1.0", "--coeff", "5.0"]);
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("mu,1\n"));
    assert!(stdout.contains("splinter_mean_count,2.5\n"));

    // tabulated kernels through --config
    let dir = scratch("kernelcfg");
    let config = dir.join("kernel.json");
    std::fs::write(
        &config,
        r#"{"type": "tabulated", "nodes": [0.0, 1.0], "values": [1.0, 1.0]}"#,
    )
    .unwrap();
    let output = run_cli(&["kernel", "--config", config.to_str().unwrap()]);
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("mu,0.25"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn kernel_without_arguments_exits_2() {
    let output = run_cli(&["kernel"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn mc_seed_override_changes_output() {
    let dir = scratch("seeds");
    let config = dir.join("mc.json");
    std::fs::write(
        &config,
        r#"{
  "kernel": {"type": "power_law", "alpha": 1.0, "C": 1.0},
  "initial": {"type": "monodisperse", "count": 100, "size": 1.0},
  "t_end": 10.0,
  "sample_times": [0.0, 10.0],
  "replicas": 2,
  "seed": 1,
  "r_floor": 1e-6,
  "hist_bins": 8
}"#,
    )
    .unwrap();
    let (out_a, out_b, out_c) = (dir.join("a"), dir.join("b"), dir.join("c"));
    for (out, seed) in [(&out_a, "1"), (&out_b, "2"), (&out_c, "1")] {
        let output = run_cli(&[
            "mc",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert!(output.status.success());
    }
    let series = |dir: &Path| std::fs::read(dir.join("series.csv")).unwrap();
    assert_ne!(
        series(&out_a),
        series(&out_b),
        "different seeds must differ"
    );
    assert_eq!(series(&out_a), series(&out_c), "same seed must match");

    // replica override narrows the ensemble to a single member
    let out_d = dir.join("d");
    let output = run_cli(&[
        "mc",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_d.to_str().unwrap(),
        "--seed",
        "1",
        "--replicas",
        "1",
    ]);
    assert!(output.status.success());
    assert_ne!(series(&out_a), series(&out_d), "replica count must matter");
    std::fs::remove_dir_all(&dir).ok();
}
