use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fiberseg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fiberseg")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn phantom(dir: &Path, out: &str, extra: &[&str]) {
    let mut args = vec!["phantom", "--out", out, "--n-fibers", "5", "--depth", "3", "--height", "64", "--width", "64", "--log-level", "error"];
    args.extend_from_slice(extra);
    let o = fiberseg(dir, &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&fiberseg(dir.path(), &["--help"])), 0);
    assert_eq!(code(&fiberseg(dir.path(), &["phantom", "--out", "x", "--bogus"])), 2);
    assert_eq!(code(&fiberseg(dir.path(), &["phantom"])), 2);
    let o = fiberseg(dir.path(), &["phantom", "--out", "x", "--set", "phantom.nope=1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("phantom.nope"));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.conf"), "seed = 1\n\n[phantom]\ndepht = 3\n").unwrap();
    let o = fiberseg(dir.path(), &["phantom", "--config", "bad.conf", "--out", "x"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
    std::fs::write(dir.path().join("bad.conf"), "[phantom]\ndepth = deep\n").unwrap();
    let o = fiberseg(dir.path(), &["phantom", "--config", "bad.conf", "--out", "x"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn flags_override_config_and_manifest_records_it() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.conf"), "seed = 4\n[phantom]\nn_fibers = 3\ndepth = 9\n[train]\nepochs = 1\n").unwrap();
    phantom(dir.path(), "ph", &["--config", "p.conf"]);
    let m = json(&dir.path().join("ph/manifest.json"));
    assert_eq!(m["command"], "phantom");
    assert_eq!(m["settings"]["seed"], "4");
    assert_eq!(m["settings"]["phantom"]["depth"], "3");
    assert_eq!(m["settings"]["phantom"]["n_fibers"], "5");
    let resolved = std::fs::read_to_string(dir.path().join("ph/resolved.conf")).unwrap();
    assert!(resolved.contains("depth = 3"));
}

#[test]
fn rerun_from_resolved_conf_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    phantom(dir.path(), "a", &["--seed", "3", "--format", "raw"]);
    let o = fiberseg(dir.path(), &["phantom", "--config", "a/resolved.conf", "--out", "b"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["image.raw", "gold.raw", "phantom.json", "resolved.conf"] {
        assert_eq!(std::fs::read(dir.path().join("a").join(f)).unwrap(), std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn evaluate_shape_mismatch_is_a_domain_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    phantom(dir.path(), "a", &[]);
    phantom(dir.path(), "b", &["--set", "phantom.height=48"]);
    let o = fiberseg(dir.path(), &["evaluate", "--pred", "a/image", "--gold", "b/gold.raw", "--out", "ev"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("ShapeMismatch"), "{}", stderr(&o));
    assert!(!dir.path().join("ev").exists());
}

#[test]
fn failed_run_leaves_existing_outputs_alone() {
    let dir = tempfile::tempdir().unwrap();
    phantom(dir.path(), "ph", &[]);
    let before = std::fs::read(dir.path().join("ph/manifest.json")).unwrap();
    let o = fiberseg(dir.path(), &["predict", "--weights", "missing.fsegnet", "--input", "ph/image", "--out", "ph"]);
    assert_eq!(code(&o), 1);
    assert_eq!(std::fs::read(dir.path().join("ph/manifest.json")).unwrap(), before);
    let names: Vec<String> = std::fs::read_dir(dir.path().join("ph")).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert!(names.iter().all(|n| !n.starts_with(".staging")), "{names:?}");
}

#[test]
fn train_predict_evaluate_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    phantom(d, "ph", &[]);
    let o = fiberseg(d, &["train", "--input", "ph/image", "--gold", "ph/gold.raw", "--epochs", "1", "--workers", "1", "--out", "tr", "--log-level", "error"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t = json(&d.join("tr/train.json"));
    assert_eq!(t["arch"], "unet2d");

    let o = fiberseg(d, &["predict", "--arch", "unet3d", "--weights", "tr/weights.fsegnet", "--input", "ph/image", "--out", "bad"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("ArchMismatch"), "{}", stderr(&o));

    let o = fiberseg(
        d,
        &["predict", "--weights", "tr/weights.fsegnet", "--input", "ph/image", "--tile", "64,64", "--stride", "32,32", "--binary", "--label", "--out", "pr", "--log-level", "error"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let timing = std::fs::read_to_string(d.join("pr/timing.csv")).unwrap();
    assert_eq!(timing.lines().count(), 4);
    assert!(d.join("pr/labels.csv").exists());

    let o = fiberseg(d, &["evaluate", "--pred", "pr/probability.raw", "--gold", "ph/gold.raw", "--out", "ev", "--log-level", "error"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = json(&d.join("ev/metrics.json"));
    assert!(m["dice"]["mean"].as_f64().is_some(), "{m}");

    let o = fiberseg(d, &["report", "--run", "tr", "--run", "pr", "--run", "ev", "--out", "rep", "--log-level", "error"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(d.join("rep/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn classic_counts_phantom_fibers() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = fiberseg(d, &["phantom", "--out", "ph", "--n-fibers", "12", "--depth", "2", "--height", "128", "--width", "128", "--log-level", "error"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = fiberseg(d, &["segment-classic", "--input", "ph/image", "--out", "cl", "--log-level", "error"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let counts = std::fs::read_to_string(d.join("cl/counts.csv")).unwrap();
    let per_slice: Vec<usize> = counts.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(per_slice, vec![12, 12]);
}
