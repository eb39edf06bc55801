//! End-to-end pipeline wiring on a short synthetic session: command
//! sequencing, output schemas, determinism, and error diagnostics.

use std::fs;
use std::path::Path;

use lvssm_cli::{run_compare, run_features, run_fit, run_simulate, RunConfig};

fn config(dir: &Path, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.data_dir = dir.join("raw");
    cfg.out_dir = dir.join("out");
    cfg.seed = seed;
    cfg.simulate.duration_s = 700;
    cfg.fit.max_iter = 120;
    cfg.fit.tol = 1e-5;
    cfg
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

/// Strip the `# config=` comment, which hashes directory paths.
fn body(path: &Path) -> Vec<u8> {
    let text = String::from_utf8(read(path)).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
        .into_bytes()
}

#[test]
fn simulate_features_fit_compare_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |sub: &Path| {
        let cfg = config(sub, 42);
        run_simulate(&cfg).unwrap();
        run_features(&cfg).unwrap();
        run_fit(&cfg).unwrap();
        run_compare(&cfg).unwrap();
        cfg
    };
    let a = run(&tmp.path().join("a"));
    let b = run(&tmp.path().join("b"));

    // Raw tables, features, and every analysis output byte-identical.
    for name in ["hr.csv", "gaze.csv", "aus.csv", "imu.csv", "objects.csv"] {
        assert_eq!(
            body(&a.data_dir.join(name)),
            body(&b.data_dir.join(name)),
            "{name} differs"
        );
    }
    for name in [
        "features.csv",
        "bcp.csv",
        "fit_report.json",
        "compare.json",
        "fig4_association.csv",
        "fig5_input_effects.csv",
        "fig6_transitions.csv",
    ] {
        assert_eq!(
            body(&a.out_dir.join(name)),
            body(&b.out_dir.join(name)),
            "{name} differs"
        );
    }

    // Feature table carries the documented 12 data columns.
    let text = String::from_utf8(read(&a.out_dir.join("features.csv"))).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(
        header,
        "t,hr,bcp_mean,au1,au2,au6,au7,au12,au15,au25,gte,road_users,hand_activity"
    );

    // Manifests name the config hash that produced each output.
    let manifest: serde_json::Value =
        serde_json::from_slice(&read(&a.out_dir.join("fit_manifest.json"))).unwrap();
    assert_eq!(manifest["config_hash"].as_str().unwrap(), a.hash());
    assert_eq!(manifest["seed"].as_u64().unwrap(), 42);

    // Comparison favors the richer model on two-factor data.
    let cmp: serde_json::Value =
        serde_json::from_slice(&read(&a.out_dir.join("compare.json"))).unwrap();
    assert!(cmp["delta_ll"].as_f64().unwrap() > 0.0);
    assert_eq!(cmp["preferred"].as_str().unwrap(), "alternative");
}

#[test]
fn missing_input_file_names_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), 1);
    run_simulate(&cfg).unwrap();
    fs::remove_file(cfg.data_dir.join("imu.csv")).unwrap();
    let err = run_features(&cfg).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("imu.csv"), "diagnostic was: {msg}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn fit_with_zero_iterations_reports_unconverged() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path(), 3);
    run_simulate(&cfg).unwrap();
    run_features(&cfg).unwrap();
    cfg.fit.max_iter = 0;
    run_fit(&cfg).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_slice(&read(&cfg.out_dir.join("fit_manifest.json"))).unwrap();
    assert_eq!(manifest["metrics"]["converged"].as_bool().unwrap(), false);
}
