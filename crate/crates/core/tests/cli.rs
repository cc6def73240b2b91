use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn posetrack(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posetrack")).current_dir(dir).args(args).output().unwrap()
}

/// Asserts a failed run reported `kind` as a JSON object on stderr.
fn assert_error(out: &Output, kind: &str) {
    assert_eq!(out.status.code(), Some(1), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is one JSON object");
    assert_eq!(err["error"], kind);
    assert!(err["message"].as_str().is_some_and(|m| !m.is_empty()));
    assert!(out.stdout.is_empty());
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn missing_scenario_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_error(&posetrack(dir.path(), &["register", "--scenario", "nope.json"]), "Io");
}

#[test]
fn malformed_scenario_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.json", "{ \"name\": ");
    assert_error(&posetrack(dir.path(), &["track", "--scenario", "bad.json"]), "Parse");
}

#[test]
fn broken_obj_mesh_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(posetrack(dir.path(), &["gen-scenario", "--out", "."]).status.success());
    let mut s: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("static.json")).unwrap()).unwrap();
    s["mesh"] = serde_json::json!({ "kind": "obj", "path": "broken.obj", "scale": 1.0 });
    write(dir.path(), "static.json", &s.to_string());
    write(dir.path(), "broken.obj", "v 0 0 0\nv 1 zero 0\nv 0 1 0\nf 1 2 3\n");
    let out = posetrack(dir.path(), &["register", "--scenario", "static.json"]);
    assert_error(&out, "Parse");
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    let message = err["message"].as_str().unwrap();
    assert!(message.contains("broken.obj") && message.contains("line 2"), "{message}");
    write(dir.path(), "broken.obj", "v 0 0 0\nv 1 0 0\nf 1 2 7\n");
    assert_error(&posetrack(dir.path(), &["register", "--scenario", "static.json"]), "InvalidMesh");
}

#[test]
fn eval_with_no_estimates_is_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    assert!(posetrack(dir.path(), &["gen-scenario", "--out", "."]).status.success());
    write(dir.path(), "est.csv", "frame,qw,qx,qy,qz,tx,ty,tz\n");
    let out = posetrack(dir.path(), &["eval", "--scenario", "static.json", "--estimates", "est.csv"]);
    assert_error(&out, "EmptyInput");
}

#[test]
fn eval_of_truth_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    assert!(posetrack(dir.path(), &["gen-scenario", "--out", "."]).status.success());
    write(dir.path(), "poses.csv", "frame,qw,qx,qy,qz,tx,ty,tz\n0,1,0,0,0,0,0,0.8\n1,0.9,0.1,0.3,0.2,0.02,-0.01,0.7\n");
    let out = posetrack(
        dir.path(),
        &["eval", "--scenario", "static.json", "--estimates", "poses.csv", "--truth", "poses.csv", "--out", "o"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["ar"], 1.0);
    assert_eq!(summary["frames"], 2);
    let on_disk: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/eval_summary.json")).unwrap()).unwrap();
    assert_eq!(on_disk, summary);
    let rows = std::fs::read_to_string(dir.path().join("o/eval.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);
}

#[test]
fn eval_counts_a_missing_pose_as_a_miss() {
    let dir = tempfile::tempdir().unwrap();
    assert!(posetrack(dir.path(), &["gen-scenario", "--out", "."]).status.success());
    write(dir.path(), "truth.csv", "frame,qw,qx,qy,qz,tx,ty,tz\n0,1,0,0,0,0,0,0.8\n1,1,0,0,0,0.01,0,0.8\n");
    write(dir.path(), "est.csv", "frame,qw,qx,qy,qz,tx,ty,tz\n0,1,0,0,0,0,0,0.8\n1,,,,,,,\n");
    let out = posetrack(
        dir.path(),
        &["eval", "--scenario", "static.json", "--estimates", "est.csv", "--truth", "truth.csv", "--out", "o"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["ar"], 0.5);
    assert_eq!(summary["frames_with_pose"], 1);
}
