use std::path::Path;
use std::process::{Command, Output};

use serde_json::json;
use svftree::pipeline::{synthetic_dataset, write_dataset, SyntheticConfig};

fn svftree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svftree"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, v: serde_json::Value) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, v.to_string()).unwrap();
    p.to_str().unwrap().to_string()
}

fn synthetic(dir: &Path) -> String {
    write_config(
        dir,
        json!({
            "output": "out",
            "seed": 3,
            "p": 2,
            "synthetic": {"levels": 4, "height": 32, "width": 32, "noise": {"law": "gaussian", "inter": 0.5}}
        }),
    )
}

#[test]
fn reconstruct_then_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let o = svftree(&["reconstruct", "--config", &synthetic(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for f in [
        "report.json",
        "metrics.csv",
        "truth.json",
        "latents/c2_n0004.svf",
        "recon/c1/n0001.pgm",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let o = svftree(&[
        "metrics",
        "--truth",
        out.join("truth.json").to_str().unwrap(),
        "--est",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.starts_with("group,level,pixels,e_w,e_b_next,excluded\n"));
    // latents are stored as f32, so only the first digits agree
    let stored = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), stored.lines().count());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), json!({"output": "out", "unknown_key": 1}));
    assert_eq!(code(&svftree(&["reconstruct", "--config", &bad])), 2);
    let missing = dir.path().join("nope.json");
    assert_eq!(
        code(&svftree(&["benchmark", "--config", missing.to_str().unwrap()])),
        2
    );
    let neither = write_config(dir.path(), json!({"output": "out"}));
    assert_eq!(code(&svftree(&["reconstruct", "--config", &neither])), 2);
    let cfg = synthetic(dir.path());
    assert_eq!(
        code(&svftree(&["lp-dump", "--config", &cfg, "--location", "99,0"])),
        2
    );
    assert_eq!(
        code(&svftree(&["lp-dump", "--config", &cfg, "--location", "x"])),
        2
    );
}

#[test]
fn missing_registration_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let syn = SyntheticConfig {
        levels: 3,
        height: 24,
        width: 24,
        ..SyntheticConfig::default()
    };
    let ds = synthetic_dataset(&syn, 1, 8, 5).unwrap();
    let manifest = write_dataset(&ds, 1, &dir.path().join("data")).unwrap();
    let cfg = write_config(dir.path(), json!({"output": "out", "p": 1, "manifest": manifest}));
    let o = svftree(&["reconstruct", "--config", &cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::remove_file(dir.path().join("data/obs/k00003.svf")).unwrap();
    let o = svftree(&["reconstruct", "--config", &cfg]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("k00003.svf"));
}

#[test]
fn lp_fallback_above_threshold_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        json!({
            "output": "out",
            "seed": 3,
            "solver": {"lp_max_iters": 0},
            "synthetic": {"levels": 4, "height": 32, "width": 32, "noise": {"law": "gaussian", "inter": 0.5}}
        }),
    );
    let o = svftree(&["reconstruct", "--config", &cfg]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert!(report["failure_fraction"].as_f64().unwrap() > 0.05);
    assert!(!report["flagged_sites"].as_array().unwrap().is_empty());
}

#[test]
fn lp_dump_prints_both_axes() {
    let dir = tempfile::tempdir().unwrap();
    let o = svftree(&["lp-dump", "--config", &synthetic(dir.path()), "--location", "2,2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("site 2,2 axis x") && text.contains("site 2,2 axis y"));
    assert!(text.contains("# lad-lp K="));
}

#[test]
fn benchmark_writes_tables_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        json!({
            "output": "bench",
            "seed": 1,
            "parallelism": 2,
            "benchmark": {
                "stack": {"levels": 4, "height": 24, "width": 24, "noise": {"law": "laplace", "inter": 0.5}},
                "p_values": [0, 2],
                "outlier_fractions": [0.0, 0.25]
            }
        }),
    );
    let o = svftree(&["benchmark", "--config", &cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("bench");
    for f in [
        "report.json",
        "metrics.csv",
        "timing.json",
        "plots/p_sweep.svg",
        "plots/outliers.svg",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 2 * (1 + 2 * 4));
}
