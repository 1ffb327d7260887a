use std::path::Path;
use std::process::{Command, Output};

use seqgc_harness::synth::two_plane_spec;
use seqgc_harness::{EvalReport, PlaneFitOutput, SceneSpec};

fn seqgc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqgc")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_spec(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("spec.json");
    let s = SceneSpec::Planes(two_plane_spec(300, 0.01, 0.1, 0.3, 3));
    std::fs::write(&spec, serde_json::to_string(&s).unwrap()).unwrap();
    spec
}

#[test]
fn synth_fit_eval_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    assert!(seqgc(&["synth", "--spec", p(&write_spec(dir.path())), "--out", p(&scene)]).status.success());
    let result = dir.path().join("fit.json");
    let out = seqgc(&[
        "fit-planes",
        "--points",
        p(&scene.join("points.csv")),
        "--mask",
        p(&scene.join("mask.csv")),
        "--mode",
        "gc",
        "--seed",
        "4",
        "--out",
        p(&result),
        "--timings",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fit: PlaneFitOutput = serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    assert_eq!(fit.models.len(), 2);
    assert!(fit.stages.is_some());

    let report = dir.path().join("eval.json");
    assert!(seqgc(&["eval", "--result", p(&result), "--truth", p(&scene.join("truth.json")), "--out", p(&report)])
        .status
        .success());
    let eval: EvalReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(eval.mean_angle_deg.unwrap() < 1.0);
    assert!(eval.models.iter().all(|m| (0.0..=1.0).contains(&m.precision) && (0.0..=1.0).contains(&m.recall)));
    assert!(eval.stages.is_some());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(seqgc(&[]).status.code(), Some(1));
    assert_eq!(seqgc(&["fit-planes", "--points", "x.csv"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let xyz = dir.path().join("cloud.xyz");
    std::fs::write(&xyz, "0 0 0\n").unwrap();
    let out = seqgc(&["fit-planes", "--points", p(&xyz), "--out", p(&dir.path().join("o.json"))]);
    assert_eq!(out.status.code(), Some(1));
    let out = seqgc(&[
        "fit-homographies",
        "--matches",
        "m.csv",
        "--image-size",
        "640by480",
        "--out",
        p(&dir.path().join("o.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "id,x,y,z\n0,1,2,3\n1,1,oops,3\n").unwrap();
    let out = seqgc(&["fit-planes", "--points", p(&bad), "--out", p(&dir.path().join("o.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let missing = dir.path().join("missing.csv");
    let out = seqgc(&["fit-planes", "--points", p(&missing), "--out", p(&dir.path().join("o.json"))]);
    assert_eq!(out.status.code(), Some(2));

    let bundle = dir.path().join("b.txt");
    std::fs::write(&bundle, "INTRINSICS\n500 500 320 240\nCAMERAS 1\n1 0 0 0 0 0 x\n").unwrap();
    let out = seqgc(&["refine-map", "--bundle", p(&bundle), "--out", p(&dir.path().join("r.txt"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unlabeled_points_yield_no_models() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("pts.csv");
    std::fs::write(&pts, "id,x,y,z\n0,0,0,0\n1,1,0,0\n2,0,1,0\n").unwrap();
    let result = dir.path().join("fit.json");
    assert!(seqgc(&["fit-planes", "--points", p(&pts), "--out", p(&result)]).status.success());
    let fit: PlaneFitOutput = serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    assert!(fit.models.is_empty());
    assert!(fit.notes.iter().any(|n| n.contains("no proposals")));
}

#[test]
fn synthetic_bundle_refines_to_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"kind":"bundle","cameras":3,"points_per_plane":30}"#).unwrap();
    let scene = dir.path().join("scene");
    assert!(seqgc(&["synth", "--spec", p(&spec), "--out", p(&scene)]).status.success());
    let report = dir.path().join("report.json");
    let out = seqgc(&[
        "refine-map",
        "--bundle",
        p(&scene.join("bundle.txt")),
        "--out",
        p(&dir.path().join("refined.txt")),
        "--report",
        p(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stderr.is_empty(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for pass in ["structure", "joint"] {
        assert_eq!(r[pass]["converged"], true, "{pass}");
    }
    assert!(r["joint"]["rms_reprojection"].as_f64().unwrap() < 1.0);
    let refined = std::fs::read_to_string(dir.path().join("refined.txt")).unwrap();
    assert!(seqgc::planemap::Bundle::from_text(&refined).is_ok());
}
