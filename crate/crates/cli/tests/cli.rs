use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn rtaprop(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtaprop"))
        .args(args.iter().map(|a| a.as_ref()))
        .output()
        .unwrap()
}

fn read_csv(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn propagate_writes_one_bound_per_waypoint() {
    let out = tempfile::tempdir().unwrap();
    let r = rtaprop(&[
        &"propagate",
        &"--plan",
        &fixture("plans/six_waypoint.toml"),
        &"--out",
        &out.path(),
        &"--dump-spline",
        &"10",
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["trace.csv", "bounds.csv", "spline.csv", "manifest.json"] {
        assert!(out.path().join(f).exists(), "{f}");
    }
    let bounds = read_csv(&out.path().join("bounds.csv"));
    assert_eq!(bounds.len(), 6);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "propagate");
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 1);
}

#[test]
fn zero_noise_bounds_equal_nominal() {
    let out = tempfile::tempdir().unwrap();
    let r = rtaprop(&[
        &"propagate",
        &"--plan",
        &fixture("plans/l_shaped.toml"),
        &"--config",
        &fixture("config/zero_noise.toml"),
        &"--out",
        &out.path(),
    ]);
    assert!(r.status.success());
    for row in read_csv(&out.path().join("bounds.csv")) {
        let v = |i: usize| row[i].parse::<f64>().unwrap();
        assert_eq!(v(2), 0.0);
        assert!((v(3) - v(1)).abs() <= 1e-6 && (v(4) - v(1)).abs() <= 1e-6);
    }
}

#[test]
fn compare_reports_both_variants() {
    let out = tempfile::tempdir().unwrap();
    let cfg = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(cfg.path(), "mc_samples = 500\nseed = 4\n").unwrap();
    let r = rtaprop(&[&"compare", &"--plan", &fixture("plans/straight.toml"), &"--config", &cfg.path(), &"--out", &out.path()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("summary.json")).unwrap()).unwrap();
    let drop = |k: &str| summary[k]["max_step_decrease_m"].as_f64().unwrap();
    assert!(drop("gated") > 3.0 * drop("blended"));
    assert!(out.path().join("arrivals_wp001.csv").exists());
    assert_eq!(read_csv(&out.path().join("ulpa_bounds.csv")).len(), 2);
}

#[test]
fn tune_runs_on_the_shipped_corpus() {
    let out = tempfile::tempdir().unwrap();
    let r = rtaprop(&[
        &"tune",
        &"--adsb",
        &fixture("adsb/tracks"),
        &"--plans",
        &fixture("adsb/plans"),
        &"--config",
        &fixture("config/tune.toml"),
        &"--out",
        &out.path(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("tuning_report.json")).unwrap()).unwrap();
    assert!(report["flights_used"].as_u64().unwrap() > 0);
    let q = &report["q_max_used"];
    for i in 0..3 {
        assert!(q[i][i].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn empty_corpus_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let (tracks, plans) = (dir.path().join("t"), dir.path().join("p"));
    std::fs::create_dir_all(&tracks).unwrap();
    std::fs::create_dir_all(&plans).unwrap();
    let r = rtaprop(&[&"tune", &"--adsb", &tracks, &"--plans", &plans, &"--out", &dir.path().join("o")]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("no flights retained"));
}

#[test]
fn exit_codes_by_failure_class() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let straight = fixture("plans/straight.toml");

    let missing = rtaprop(&[&"propagate", &"--plan", &dir.path().join("nope.toml"), &"--out", &out]);
    assert_eq!(missing.status.code(), Some(2));

    let bad_key = dir.path().join("bad.toml");
    std::fs::write(&bad_key, "bogus = 1\n").unwrap();
    let r = rtaprop(&[&"propagate", &"--plan", &straight, &"--config", &bad_key, &"--out", &out]);
    assert_eq!(r.status.code(), Some(2));

    let overflow = dir.path().join("overflow.toml");
    std::fs::write(&overflow, "sigma_a2_m2s4 = 1.7e308\nq_max_scale_m2 = 1.7e308\n").unwrap();
    let r = rtaprop(&[&"propagate", &"--plan", &straight, &"--config", &overflow, &"--out", &out]);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));

    // Output path whose parent is a regular file.
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let r = rtaprop(&[&"propagate", &"--plan", &straight, &"--out", &blocker.join("sub")]);
    assert_eq!(r.status.code(), Some(4));

    let usage = rtaprop(&[&"propagate"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let r = rtaprop(&[&"propagate", &"--plan", &fixture("plans/straight.toml"), &"--seed", &"77", &"--out", &out]);
    assert!(r.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 77);
    assert_eq!(manifest["config"]["seed"], 77);
}
