//! The `repsim` binary: verbs, overrides and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn repsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repsim"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("cfg.json");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn small(kind: &str, methods: &str, noise: f64) -> String {
    format!(
        r#"{{
  "kind": "{kind}",
  "seed": 3,
  "dataset": {{ "generator": "blobs", "n": 120, "classes": 2, "noise": {noise}, "dim": 2, "separation": 4.0, "seed": 5 }},
  "model": {{ "hidden": [6, 6], "instances": 2, "train": {{ "epochs": 3 }} }},
  "methods": [{methods}],
  "output_dir": "unused"
}}"#
    )
}

#[test]
fn missing_config_is_a_validation_error() {
    let out = repsim(&["sanity"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn invalid_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &small("sanity-check", r#""lcka""#, 0.5).replace("\"n\": 120", "\"n\": 0"),
    );
    assert_eq!(code(&repsim(&["sanity", "--config", &cfg])), 2);
}

#[test]
fn stitch_without_stitching_methods_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small("similarity-grid", r#""lcka""#, 0.5));
    assert_eq!(code(&repsim(&["stitch", "--config", &cfg])), 2);
}

#[test]
fn simgrid_writes_grids_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small("train-models", r#""lcka", "opd""#, 0.5));
    let out_dir = dir.path().join("run");
    let out = repsim(&[
        "simgrid",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "9",
        "--threads",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("manifest.json").exists());
    assert!(out_dir.join("grids/lcka/intra-net0-net0.csv").exists());
    let manifest = std::fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"similarity-grid\""));

    // heatmap re-renders an existing grid next to it
    let grid = out_dir.join("grids/opd/intra-net1-net1.csv");
    let hm = dir.path().join("hm");
    std::fs::create_dir(&hm).unwrap();
    let out = repsim(&[
        "heatmap",
        grid.to_str().unwrap(),
        "--out",
        hm.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(hm.join("intra-net1-net1.svg").exists());
    assert!(hm.join("intra-net1-net1.ppm").exists());
}

#[test]
fn failed_cells_give_partial_exit_code() {
    // zero noise and zero separation make every input identical
    let dir = tempfile::tempdir().unwrap();
    let body = small("similarity-grid", r#""lcka""#, 0.0)
        .replace("\"separation\": 4.0", "\"separation\": 0.0");
    let cfg = write_config(dir.path(), &body);
    let out_dir = dir.path().join("run");
    let out = repsim(&[
        "simgrid",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn unknown_verb_is_rejected() {
    assert_ne!(code(&repsim(&["bogus"])), 0);
}
