//! Harness-level tests: config validation, artifact shapes, exit codes.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_setkkl")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("setkkl-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config(out_dir: &str) -> serde_json::Value {
    serde_json::json!({
        "system": "limit_cycle_squared_output",
        "domain": { "kind": "annulus", "center": [0.0, 0.0], "inner": 0.5, "outer": 1.7, "grid_resolution": 14 },
        "pair": { "n_o": 3, "eigenvalues": [-1.0, -2.0, -3.0] },
        "transform": { "step": 0.01, "tol_trunc": 1e-5, "r_keep": 1.7, "r_zero": 2.55 },
        "observer": { "x0": [1.2, 0.0], "horizon": 0.5, "step": 0.001, "decimation": 50 },
        "out_dir": out_dir
    })
}

#[test]
fn missing_eigenvalues_is_a_config_error_naming_the_field() {
    let dir = scratch("missing-field");
    let mut cfg = small_config(dir.join("out").to_str().unwrap());
    cfg["pair"]
        .as_object_mut()
        .unwrap()
        .remove("eigenvalues");
    let path = dir.join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = Command::new(bin())
        .args(["transform-build", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("eigenvalues"),
        "error does not name the missing field: {stderr}"
    );
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn non_hurwitz_spectrum_is_a_config_error() {
    let dir = scratch("hurwitz");
    let mut cfg = small_config(dir.join("out").to_str().unwrap());
    cfg["pair"]["eigenvalues"] = serde_json::json!([-1.0, 2.0, -3.0]);
    let path = dir.join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = Command::new(bin())
        .args(["transform-build", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Hurwitz"), "unexpected message: {stderr}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn unknown_system_is_a_config_error() {
    let dir = scratch("unknown-system");
    let mut cfg = small_config(dir.join("out").to_str().unwrap());
    cfg["system"] = serde_json::json!("not_a_system");
    let path = dir.join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = Command::new(bin())
        .args(["observe", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn transform_build_emits_atlas_and_conditioning() {
    let dir = scratch("build");
    let out_dir = dir.join("out");
    let cfg = small_config(out_dir.to_str().unwrap());
    let path = dir.join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = Command::new(bin())
        .args(["transform-build", "--config", path.to_str().unwrap(), "--quiet"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let atlas = std::fs::read_to_string(out_dir.join("atlas.csv")).unwrap();
    let mut lines = atlas.lines();
    assert_eq!(
        lines.next().unwrap(),
        "x_1,x_2,z_1,z_2,z_3,z_4,z_5,z_6,sigma_min,cond"
    );
    assert!(lines.count() > 10);
    assert!(out_dir.join("conditioning.csv").exists());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "transform-build");
    assert!(meta["resolved"]["tau"].as_f64().unwrap() > 0.0);
    assert!(meta["results"]["full_rank"].as_bool().unwrap());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn zero_horizon_run_has_a_single_row() {
    let dir = scratch("zero-horizon");
    let out_dir = dir.join("out");
    let mut cfg = small_config(out_dir.to_str().unwrap());
    cfg["observer"]["horizon"] = serde_json::json!(0.0);
    let path = dir.join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = Command::new(bin())
        .args(["observe", "--config", path.to_str().unwrap(), "--quiet"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let run = std::fs::read_to_string(out_dir.join("run.csv")).unwrap();
    let lines: Vec<&str> = run.lines().collect();
    assert_eq!(lines.len(), 2, "header plus exactly one row: {lines:?}");
    assert!(lines[0].starts_with("t,z_1"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn diagnose_with_all_toggles_off_emits_only_meta() {
    let dir = scratch("diag-off");
    let out_dir = dir.join("out");
    let cfg = small_config(out_dir.to_str().unwrap());
    let path = dir.join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = Command::new(bin())
        .args(["diagnose", "--config", path.to_str().unwrap(), "--quiet"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let entries: Vec<String> = std::fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(entries, vec!["meta.json"]);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn diagnose_full_toggles_emit_all_artifacts() {
    let dir = scratch("diag-on");
    let out_dir = dir.join("out");
    let mut cfg = small_config(out_dir.to_str().unwrap());
    cfg["domain"]["grid_resolution"] = serde_json::json!(10);
    cfg["diagnostics"] = serde_json::json!({
        "cardinality": true,
        "characterization": true,
        "rank_map": true,
        "hm_order": 1,
        "k_sweep": [1.0, 2.0],
        "oracle_horizon": 3.0,
        "probe_count": 4
    });
    let path = dir.join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = Command::new(bin())
        .args(["diagnose", "--config", path.to_str().unwrap(), "--quiet"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for artifact in ["indist.csv", "cardinality.csv", "observability.csv", "ksweep.csv", "meta.json"] {
        assert!(out_dir.join(artifact).exists(), "missing {artifact}");
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["results"]["cardinality"]["modal_p"], 2);
    assert_eq!(meta["results"]["characterization"]["pass"], true);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn seed_override_changes_noise_realization() {
    let dir = scratch("seed");
    let mut cfg = small_config(dir.join("a").to_str().unwrap());
    cfg["observer"]["noise"] = serde_json::json!({ "kind": "uniform", "amplitude": 0.05, "seed": 1 });
    let path = dir.join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    for (out, seed) in [("a", "1"), ("b", "2")] {
        let st = Command::new(bin())
            .args([
                "observe",
                "--config",
                path.to_str().unwrap(),
                "--out",
                dir.join(out).to_str().unwrap(),
                "--seed",
                seed,
                "--quiet",
            ])
            .status()
            .unwrap();
        assert!(st.success());
    }
    let a = std::fs::read(dir.join("a/run.csv")).unwrap();
    let b = std::fs::read(dir.join("b/run.csv")).unwrap();
    assert_ne!(a, b, "different seeds should perturb the record");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn float_format_has_17_significant_digits() {
    let dir = scratch("fmt");
    let out_dir = dir.join("out");
    let cfg = small_config(out_dir.to_str().unwrap());
    let path = dir.join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let st = Command::new(bin())
        .args(["observe", "--config", path.to_str().unwrap(), "--quiet"])
        .status()
        .unwrap();
    assert!(st.success());
    let run = std::fs::read_to_string(out_dir.join("run.csv")).unwrap();
    let row = run.lines().nth(1).unwrap();
    let field = row.split(',').nth(7).unwrap(); // x_true_1 = 1.2
    assert_eq!(field, "1.2000000000000000e0");
    // LF endings, no CR anywhere.
    assert!(!run.contains('\r'));
    let _ = std::fs::remove_dir_all(&dir);
}
