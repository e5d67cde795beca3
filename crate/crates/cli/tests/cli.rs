//! End-to-end tests of the fusecal binary: exit codes, stage artifacts,
//! determinism across runs and worker counts, and zero-shot transfer.

use std::path::Path;
use std::process::{Command, Output};

fn fusecal() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fusecal"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = fusecal().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "fusecal {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth(dir: &Path, seed: u64) -> std::path::PathBuf {
    run_ok(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--identities",
        "10",
        "--items",
        "6",
        "--dims",
        "8",
        "--seed",
        &seed.to_string(),
    ]);
    dir.join("config.toml")
}

#[test]
fn run_produces_report_and_calibrators() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(&dir.path().join("data"), 5);
    let out = dir.path().join("out");
    run_ok(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(out.join("report.json").exists());
    assert!(out.join("predictions.csv").exists());
    assert!(out.join("calibrators/global_cos.calib.json").exists());
    assert!(out.join("calibrators/local_match.calib.json").exists());

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["format"], "fusecal-report");
    let names: Vec<&str> = report["scores"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"fused"));
    assert!(names.contains(&"global_cos"));
    assert!(names.contains(&"local_match"));
}

#[test]
fn identical_runs_emit_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(&dir.path().join("data"), 11);
    for out in ["o1", "o2"] {
        run_ok(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().join(out).to_str().unwrap(),
        ]);
    }
    for name in ["report.json", "predictions.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("o1").join(name)).unwrap(),
            std::fs::read(dir.path().join("o2").join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn single_thread_run_matches_default() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(&dir.path().join("data"), 13);
    run_ok(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("multi").to_str().unwrap(),
    ]);
    let out = fusecal()
        .env("FUSECAL_THREADS", "1")
        .args([
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().join("single").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(dir.path().join("multi/report.json")).unwrap(),
        std::fs::read(dir.path().join("single/report.json")).unwrap(),
        "worker count changed the report"
    );
}

#[test]
fn staged_commands_compose() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(&dir.path().join("data"), 17);
    let out = dir.path().join("out");
    let c = config.to_str().unwrap();
    let o = out.to_str().unwrap();
    run_ok(&["score-global", "--config", c, "--out", o]);
    assert!(out.join("raw_global_global_cos.fscm").exists());
    run_ok(&["tune-mu", "--config", c, "--out", o]);
    assert!(out.join("mu.json").exists());
    run_ok(&["score-local", "--config", c, "--out", o]);
    run_ok(&["calibrate", "--config", c, "--out", o]);
    assert!(out.join("calibrators/global_cos.calib.json").exists());
    run_ok(&["fuse", "--config", c, "--out", o]);
    assert!(out.join("fused.fscm").exists());
    run_ok(&["evaluate", "--config", c, "--out", o]);
    assert!(out.join("report.json").exists());

    // The staged path lands on the same result as a one-shot run.
    let direct = dir.path().join("direct");
    run_ok(&["run", "--config", c, "--out", direct.to_str().unwrap()]);
    assert_eq!(
        std::fs::read(out.join("report.json")).unwrap(),
        std::fs::read(direct.join("report.json")).unwrap()
    );
}

#[test]
fn shortlist_reports_budget_curve() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(&dir.path().join("data"), 19);
    let out = dir.path().join("out");
    run_ok(&[
        "shortlist",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--budget",
        "5",
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["budget"], 5);
    let curve = report["budget_curve"].as_array().unwrap();
    assert!(!curve.is_empty());
    let budgets: Vec<u64> = curve.iter().map(|p| p["budget"].as_u64().unwrap()).collect();
    let mut sorted = budgets.clone();
    sorted.sort_unstable();
    assert_eq!(budgets, sorted, "budget curve must be sorted by budget");
    for p in curve {
        let acc = p["accuracy"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
}

#[test]
fn zero_shot_run_uses_imported_calibrators() {
    let dir = tempfile::tempdir().unwrap();
    let config_a = synth(&dir.path().join("a"), 23);
    let config_b = synth(&dir.path().join("b"), 29);
    let out_a = dir.path().join("out_a");
    run_ok(&[
        "run",
        "--config",
        config_a.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
        "--mu",
        "0.5",
    ]);
    let out_b = dir.path().join("out_b");
    run_ok(&[
        "run",
        "--config",
        config_b.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
        "--mu",
        "0.5",
        "--zero-shot",
        out_a.join("calibrators").to_str().unwrap(),
    ]);
    assert!(out_b.join("report.json").exists());
    // Zero-shot runs import calibrators rather than fitting their own.
    assert!(!out_b.join("calibrators").exists());
}

#[test]
fn exit_codes() {
    // Usage error: unknown flag.
    let out = fusecal().args(["run", "--nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Config error: missing config file.
    let dir = tempfile::tempdir().unwrap();
    let out = fusecal()
        .args([
            "run",
            "--config",
            dir.path().join("absent.toml").to_str().unwrap(),
            "--out",
            dir.path().join("o").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "missing config should exit 1");

    // Data error: corrupted embedding magic.
    let config = synth(&dir.path().join("data"), 31);
    let femb = dir.path().join("data/query.femb");
    let mut bytes = std::fs::read(&femb).unwrap();
    bytes[0] = b'X';
    std::fs::write(&femb, &bytes).unwrap();
    let out = fusecal()
        .args([
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().join("o2").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "bad magic should exit 2");

    // Help exits 0.
    let out = fusecal().args(["--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}
