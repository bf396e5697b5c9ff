use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_scsa-bp");

fn small_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/small.toml")
}

fn scsa(out: &Path, args: &[&str]) -> Output {
    let o = Command::new(BIN)
        .arg("--config")
        .arg(small_config())
        .arg("--out-dir")
        .arg(out)
        .arg("--log-level")
        .arg("warn")
        .args(args)
        .output()
        .unwrap();
    if !o.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&o.stdout));
        eprintln!("{}", String::from_utf8_lossy(&o.stderr));
    }
    o
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("run_manifest.json")).unwrap()).unwrap()
}

fn statuses(m: &Value) -> Vec<(String, String)> {
    m["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| (s["stage"].as_str().unwrap().to_string(), s["status"].as_str().unwrap().to_string()))
        .collect()
}

const STAGES: [&str; 7] = ["ingest", "preprocess", "fiducials", "scsa", "features", "train_eval", "noise_test"];

/// One full run shared by the smoke and resume checks.
#[test]
fn full_run_then_resume() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(scsa(&out, &["run"]).status.success());

    let m = manifest(&out);
    let st = statuses(&m);
    assert_eq!(st.iter().map(|s| s.0.as_str()).collect::<Vec<_>>(), STAGES);
    assert!(st.iter().all(|s| s.1 == "ran"), "{st:?}");
    assert_eq!(m["config"]["seed"], 7);
    assert!(m["git_hash"].is_string());

    // every listed output exists and every file under a stage dir is listed
    let mut listed = std::collections::BTreeSet::new();
    for s in m["stages"].as_array().unwrap() {
        for o in s["outputs"].as_array().unwrap() {
            let p = o.as_str().unwrap();
            assert!(out.join(p).is_file(), "{p} missing");
            listed.insert(p.to_string());
        }
    }
    for stage in ["preprocess", "fiducials", "scsa", "features", "train", "noise"] {
        for e in std::fs::read_dir(out.join(stage)).unwrap() {
            let name = e.unwrap().file_name().into_string().unwrap();
            if name != "stage.json" {
                assert!(listed.contains(&format!("{stage}/{name}")), "orphan {stage}/{name}");
            }
        }
    }
    for f in [
        "features/features.csv",
        "train/metrics.json",
        "train/predictions.csv",
        "train/model_sbp.json",
        "noise/stress.csv",
        "noise/stress.svg",
        "noise/fiducials.csv",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }

    let metrics = std::fs::read(out.join("train/metrics.json")).unwrap();
    std::fs::remove_file(out.join("train/metrics.json")).unwrap();
    assert!(scsa(&out, &["--resume", "run"]).status.success());
    let st = statuses(&manifest(&out));
    for (stage, status) in &st {
        let want = if stage == "train_eval" { "ran" } else { "skipped" };
        assert_eq!(status, want, "{stage}");
    }
    assert_eq!(std::fs::read(out.join("train/metrics.json")).unwrap(), metrics);

    // evaluate alone rebuilds the same metrics from the stored predictions
    std::fs::remove_file(out.join("train/metrics.json")).unwrap();
    assert!(scsa(&out, &["evaluate"]).status.success());
    assert_eq!(std::fs::read(out.join("train/metrics.json")).unwrap(), metrics);

    // a standalone sweep with explicit model, levels and trials
    let report = dir.path().join("report");
    let model = out.join("train/model_sbp.json");
    let o = scsa(
        &out,
        &["noise-test", "--model", model.to_str().unwrap(), "--snr", "20:30:10", "--trials", "1", "--out", report.to_str().unwrap()],
    );
    assert!(o.status.success());
    let csv = std::fs::read_to_string(report.join("stress.csv")).unwrap();
    assert!(csv.contains("trials_per_level=1"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2 * 9);
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = scsa(d, &["run", "--stages", "ingest,preprocess,fiducials,scsa,features,train_eval"]);
        assert!(o.status.success());
    }
    for f in ["features/features.csv", "train/metrics.json", "train/predictions.csv", "train/model_sbp.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn failed_stage_gives_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    // features before anything upstream exists
    let o = scsa(&out, &["features"]);
    assert!(!o.status.success());
    let st = statuses(&manifest(&out));
    assert_eq!(st, vec![("features".to_string(), "failed".to_string())]);

    let o = scsa(&out, &["run", "--stages", "preprocess,fiducials"]);
    assert_eq!(o.status.code(), Some(1));
    let st = statuses(&manifest(&out));
    assert_eq!(st[0].1, "failed");
    assert_eq!(st[1].1, "not_run");
}

#[test]
fn bad_arguments_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = scsa(&out, &["run", "--stages", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(BIN).args(["--config", "/nonexistent.toml", "run"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn synth_and_single_stages() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let data = dir.path().join("data");
    let o = scsa(&out, &["synth", "--out", data.to_str().unwrap()]);
    assert!(o.status.success());
    let listed = String::from_utf8(o.stdout).unwrap();
    assert_eq!(listed.lines().count(), 5);
    for id in ["syn01", "syn05"] {
        assert!(data.join(format!("{id}.csv")).is_file());
        assert!(data.join(format!("{id}.json")).is_file());
    }
    // ingest and preprocess run one at a time, each from the previous files
    assert!(scsa(&out, &["ingest"]).status.success());
    assert!(scsa(&out, &["preprocess"]).status.success());
    let st = statuses(&manifest(&out));
    assert_eq!(st, vec![("preprocess".to_string(), "ran".to_string())]);
    assert!(out.join("preprocess/syn03.csv").is_file());
}
