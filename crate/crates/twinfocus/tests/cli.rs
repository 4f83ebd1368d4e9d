use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use twinfocus::cli::{Manifest, MANIFEST_NAME, SCENARIOS};
use twinfocus::formats::sha256_hex;

fn twinfocus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twinfocus")).args(args).output().expect("spawn twinfocus")
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_slice(&fs::read(dir.join(MANIFEST_NAME)).unwrap()).unwrap()
}

const SMALL: &str = r#"{"scenario":"focus-nonclassical","grid":{"n_side":3},"out_shape":[6,6],"optimizer":{"steps":15}}"#;

#[test]
fn lists_every_scenario() {
    let out = twinfocus(&["--list-scenarios"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for (_, name, _) in SCENARIOS {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing from listing");
    }
}

#[test]
fn runs_are_reproducible_and_hashed() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for d in &dirs {
        let out = twinfocus(&["--config", SMALL, "--seed", "9", "--out", d.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(metrics["final_value"].as_f64().unwrap() >= metrics["initial_value"].as_f64().unwrap());
    }
    let (a, b) = (manifest(&dirs[0]), manifest(&dirs[1]));
    assert_eq!(a.master_seed, 9);
    assert_eq!(a.files, b.files);
    assert_eq!(a.metrics, b.metrics);
    for f in &a.files {
        let bytes = fs::read(dirs[0].join(&f.path)).unwrap();
        assert_eq!(sha256_hex(&bytes), f.sha256, "{}", f.path);
        assert_eq!(bytes.len() as u64, f.bytes);
    }
    assert!(a.files.iter().any(|f| f.path == "mask.cmx"));

    let other = tmp.path().join("c");
    assert!(twinfocus(&["--config", SMALL, "--seed", "10", "--out", other.to_str().unwrap()]).status.success());
    let trace = |d: &Path| fs::read(d.join("trace.csv")).unwrap();
    assert_ne!(trace(&dirs[0]), trace(&other));
}

#[test]
fn overrides_and_scenario_names_combine() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let out = twinfocus(&[
        "focus-classical",
        "--out",
        out_dir.to_str().unwrap(),
        "--override",
        "grid.n_side=3",
        "--override",
        "optimizer.steps=10",
        "--override",
        "out_shape=[6,6]",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&out_dir);
    assert_eq!(m.config.grid.n_side, 3);
    assert_eq!(m.config.optimizer.steps, 10);
    assert!(m.metrics["peak_to_mean"].as_f64().unwrap() > m.metrics["peak_to_mean_before"].as_f64().unwrap());
}

#[test]
fn report_summarizes_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for seed in ["1", "2"] {
        let d = tmp.path().join(seed);
        assert!(twinfocus(&["--config", SMALL, "--seed", seed, "--out", d.to_str().unwrap()]).status.success());
        dirs.push(d.to_str().unwrap().to_string());
    }
    let out = twinfocus(&["report", &dirs[0], &dirs[1]]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let row = csv.lines().find(|l| l.starts_with("final_value,")).expect("final_value row");
    assert_eq!(row.split(',').nth(1), Some("2"));

    let prefix = tmp.path().join("summary");
    assert!(twinfocus(&["report", &dirs[0], &dirs[1], "--out", prefix.to_str().unwrap()]).status.success());
    assert!(prefix.with_extension("json").exists() && prefix.with_extension("csv").exists());
}

#[test]
fn bad_input_exits_with_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("x");
    for args in [
        vec!["report"],
        vec!["no-such-scenario"],
        vec!["focus-classical", "--override", "grid.pitch=-1", "--out", out_dir.to_str().unwrap()],
        vec!["--config", r#"{"scenario":"focus-classical","typo":1}"#],
        vec![],
    ] {
        let out = twinfocus(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "), "{args:?}");
    }
    assert!(!out_dir.exists());
}
