//! End-to-end runs of the `cwsbie` binary on coarse grids.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cwsbie(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cwsbie")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn error_json(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(stderr.lines().last().unwrap_or_default()).unwrap_or_else(|e| panic!("{e}: {stderr}"))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn unknown_keys_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "c.json", r#"{"surface": {"n_theta": 32, "nthetaa": 4}}"#);
    let out = cwsbie(&["reconstruct", "--config", &config, "--output", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_json(&out);
    assert_eq!(err["error"]["key"], "surface.nthetaa");
    assert_eq!(err["error"]["kind"], "config");

    let config = write_config(dir.path(), "route.json", r#"{"kernel": {"route": "sideways"}}"#);
    let out = cwsbie(&["kernel", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["key"], "kernel.route");

    let config = write_config(dir.path(), "broken.json", r#"{"surface": "#);
    assert_eq!(cwsbie(&["validate", "--config", &config]).status.code(), Some(2));
    assert_eq!(cwsbie(&["reconstruct", "--grid", "32by32"]).status.code(), Some(2));
}

#[test]
fn plasma_too_close_to_a_coarse_surface_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = cwsbie(&["reconstruct", "--grid", "16x16", "--output", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["key"], "plasma");
}

#[test]
fn reconstruct_writes_every_artifact_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "c.json",
        r#"{"vtk": {"dims": [6, 6, 4]}, "dump_operators": true, "step1": {"n_modes": 16}}"#,
    );
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = cwsbie(&[
            "reconstruct",
            "--config",
            &config,
            "--grid",
            "32x32",
            "--seed",
            "11",
            "--threads",
            "1",
            "--output",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let a = run("a");
    for file in ["report.json", "residuals.csv", "current.csv", "current.json", "field_on_plasma.csv", "field.vtk"] {
        assert!(a.join(file).is_file(), "missing {file}");
    }
    assert!(std::fs::metadata(a.join("operators.bin")).unwrap().len() > 4 * 1024 * 1024);

    let report = read_json(&a.join("report.json"));
    assert_eq!(report["seed"], 11);
    let history: Vec<f64> =
        report["step1"]["residual_history"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
    assert!(report["step2"]["residual_vs_target"].as_f64().unwrap() < 1e-2);
    assert!(report["step2"]["windings"]["qbar_relative"].as_f64().unwrap().abs() < 1e-6);
    assert!(report["current"]["representation_mismatch"].as_f64().unwrap() < 1e-4);

    let current = read_json(&a.join("current.json"));
    assert!(current["alpha"].is_number() && current["beta"].is_number());
    assert!(current["stream_coeffs"]["sin"].is_array());

    let field = std::fs::read_to_string(a.join("field_on_plasma.csv")).unwrap();
    assert_eq!(field.lines().next(), Some("x,y,z,Bx,By,Bz"));
    assert_eq!(field.lines().count(), 1 + report["plasma_points"].as_u64().unwrap() as usize);
    assert!(std::fs::read_to_string(a.join("field.vtk")).unwrap().starts_with("# vtk DataFile Version"));

    let b = run("b");
    assert_eq!(std::fs::read(a.join("report.json")).unwrap(), std::fs::read(b.join("report.json")).unwrap());

    // Operators loaded from the dump give the same report.
    let cached =
        write_config(dir.path(), "cached.json", r#"{"operators": "a/operators.bin", "step1": {"n_modes": 16}}"#);
    let out_dir = dir.path().join("cached");
    let args = ["reconstruct", "--config", &cached, "--grid", "32x32", "--seed", "11", "--threads", "1", "--output"];
    let out = cwsbie(&[&args[..], &[out_dir.to_str().unwrap()]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(a.join("report.json")).unwrap(), std::fs::read(out_dir.join("report.json")).unwrap());

    // A dump for a different grid is rejected as a config error.
    let out = cwsbie(&[&args[..4], &["24x24", "--output", out_dir.to_str().unwrap()]].concat());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["key"], "operators");
}

#[test]
fn loop_and_sampled_targets_reconstruct() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "loop.json",
        r#"{"target": {"loop": {"center": [0, 0, 3], "radius": 2.5, "normal": [0, 0, 1], "current": 1}},
            "tikhonov": {"lambda_sweep": []}}"#,
    );
    let out_dir = dir.path().join("loop");
    let out = cwsbie(&["reconstruct", "--config", &config, "--grid", "32x32", "--output", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&out_dir.join("report.json"));
    assert!(report["step2"]["residual_vs_target"].as_f64().unwrap() < 1e-2);
    assert!(report["tikhonov"].is_null());

    // A uniform field sampled on a ring well inside the surface.
    let mut csv = String::from("x,y,z,weight,Bx,By,Bz\n");
    for k in 0..120 {
        let phi = std::f64::consts::TAU * k as f64 / 120.0;
        let (r, z) = (2.0 + 0.3 * (3.0 * phi).cos(), 0.3 * (3.0 * phi).sin());
        csv.push_str(&format!("{},{},{z},1,0,0,1\n", r * phi.cos(), r * phi.sin()));
    }
    std::fs::write(dir.path().join("ring.csv"), csv).unwrap();
    let config = write_config(dir.path(), "samples.json", r#"{"target": {"samples": "ring.csv"}}"#);
    let out_dir = dir.path().join("samples");
    let out = cwsbie(&["reconstruct", "--config", &config, "--grid", "32x32", "--output", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&out_dir.join("report.json"));
    assert_eq!(report["plasma_points"], 120);
    assert!(report["step1"]["target_circulation"].is_null());
    assert!(report["step2"]["residual_vs_target"].as_f64().unwrap() < 1e-2);

    std::fs::write(dir.path().join("ring.csv"), "x,y,z\n1,2,3\n").unwrap();
    let out = cwsbie(&["reconstruct", "--config", &config, "--grid", "32x32", "--output", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["key"], "target.samples");
}

#[test]
fn kernel_routes_agree() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "k.json", r#"{"kernel": {"route": "exterior", "iterations": 8}}"#);
    let out = cwsbie(&["kernel", "--config", &config, "--grid", "32x32", "--output", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["selected_route"], "exterior");
    assert!(report["exact_vs_exterior"].as_f64().unwrap() < 1e-6);
    let routes = report["routes"].as_array().unwrap();
    assert_eq!(routes.len(), 3);
    for r in routes {
        assert!(r["windings"]["pbar_relative"].as_f64().unwrap() < 1e-6);
        assert!(r["windings"]["qbar_relative"].as_f64().unwrap() > 0.1);
    }
    let leakage: Vec<f64> = report["series_leakage"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(leakage.len(), 9);
    assert!(leakage.last().unwrap() < &leakage[0]);
    assert!(report["fitted_decay_ratio"].as_f64().unwrap() < 1.0);
    assert!(dir.path().join("leakage.csv").is_file() && dir.path().join("current.csv").is_file());
}

#[test]
fn validate_passes_on_coarse_grids_and_catches_a_broken_operator() {
    let dir = tempfile::tempdir().unwrap();
    for grid in ["16", "32x32"] {
        let out = cwsbie(&["validate", "--grid", grid, "--output", dir.path().to_str().unwrap()]);
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(out.status.success(), "{stdout}");
        assert!(!stdout.contains("FAIL"));
        assert_eq!(read_json(&dir.path().join("report.json"))["failed"], 0);
    }

    let out = cwsbie(&["validate", "--grid", "16", "--force-bug", "--output", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("solid angle |W1 + 1/2|_inf") && l.ends_with("FAIL")), "{stdout}");
    assert_eq!(error_json(&out)["error"]["kind"], "validation");
    assert_eq!(read_json(&dir.path().join("report.json"))["forced_bug"], true);
}
