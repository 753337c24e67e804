use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gsr_fluid::config::RunConfig;
use gsr_fluid::io::{mse_metric, FrameSnapshot};
use gsr_fluid::sim::resolve;
use gsr_fluid::Scene;

const SMALL: &str = r#"{
  "particles": 100,
  "init_iterations": 20,
  "projection_iterations": 8,
  "reseed_iterations": 4,
  "interior_samples": 256,
  "boundary_samples": 32,
  "reseed_samples": 64
}"#;

fn gsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsr"))
        .args(args)
        .env("GSR_THREADS", "1")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = gsr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fail(args: &[&str]) -> String {
    let out = gsr(args);
    assert!(!out.status.success(), "{args:?} succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "), "{err}");
    err
}

fn init_run(dir: &Path, scene: &str) {
    let cfg = dir.join("small.json");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.join("run");
    ok(&[
        "init",
        "--scene",
        scene,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "3",
    ]);
}

#[test]
fn init_writes_snapshot_losses_and_config() {
    let tmp = tempfile::tempdir().unwrap();
    init_run(tmp.path(), "taylor_green");
    let run = tmp.path().join("run");
    let snap = FrameSnapshot::read(&run.join("frame_0000.gsr")).unwrap();
    assert_eq!((snap.frame, snap.field.len()), (0, 100));
    let csv = fs::read_to_string(run.join("init_loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
    let cfg = RunConfig::from_json(&fs::read_to_string(run.join("run.json")).unwrap()).unwrap();
    assert_eq!((cfg.seed, cfg.scene.as_deref()), (Some(3), Some("taylor_green")));
    assert!(!run.join("stage2_loss.csv").exists());

    // metrics reports the same grid error as the library
    let line = ok(&["metrics", run.join("frame_0000.gsr").to_str().unwrap()]);
    let mse: f64 = line
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("mse_initial="))
        .unwrap()
        .parse()
        .unwrap();
    let (scene, _) = resolve(&cfg, None).unwrap();
    let raw = Scene::by_name("taylor_green").unwrap();
    let expect = mse_metric(&snap.field, scene.scale, &raw.initial_field(), &raw.domain, 60);
    assert_eq!(mse, expect);
    assert!(line.starts_with("frame=0 time=0 particles=100 "));
}

#[test]
fn zero_frames_is_a_no_op() {
    let tmp = tempfile::tempdir().unwrap();
    init_run(tmp.path(), "taylor_vortex");
    let run = tmp.path().join("run");
    let before: Vec<_> = fs::read_dir(&run).unwrap().collect();
    assert_eq!(ok(&["simulate", "--run", run.to_str().unwrap(), "--frames", "0"]), "");
    assert_eq!(fs::read_dir(&run).unwrap().count(), before.len());
}

#[test]
fn resume_matches_a_single_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    init_run(a.path(), "leapfrog2d");
    init_run(b.path(), "leapfrog2d");
    let (ra, rb) = (a.path().join("run"), b.path().join("run"));
    let (ra, rb) = (ra.to_str().unwrap(), rb.to_str().unwrap());
    ok(&["simulate", "--run", ra, "--frames", "5"]);
    ok(&["resume", "--run", ra, "--frames", "5"]);
    ok(&["simulate", "--run", rb, "--frames", "10", "--image", "vorticity"]);
    for f in ["frame_0005.gsr", "frame_0010.gsr", "frame_0010_loss.csv"] {
        let x = fs::read(Path::new(ra).join(f)).unwrap();
        assert_eq!(x, fs::read(Path::new(rb).join(f)).unwrap(), "{f}");
    }
    let img = fs::read(Path::new(rb).join("frame_0007_vorticity.ppm")).unwrap();
    assert!(img.starts_with(b"P6\n256 "));
    let csv = fs::read_to_string(Path::new(ra).join("frame_0003_loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
}

#[test]
fn rasterize_writes_ppm() {
    let tmp = tempfile::tempdir().unwrap();
    init_run(tmp.path(), "taylor_green");
    let snap = tmp.path().join("run/frame_0000.gsr");
    let out = tmp.path().join("v.ppm");
    let args = [
        "rasterize",
        snap.to_str().unwrap(),
        "--quantity",
        "speed",
        "--resolution",
        "64",
        "--out",
        out.to_str().unwrap(),
    ];
    ok(&args);
    let bytes = fs::read(&out).unwrap();
    assert!(bytes.starts_with(b"P6\n64 64\n255\n"));
    assert_eq!(bytes.len(), 13 + 64 * 64 * 3);
    ok(&args);
    assert_eq!(fs::read(&out).unwrap(), bytes);
}

#[test]
fn errors_are_single_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let o = out.to_str().unwrap();
    fail(&["init", "--scene", "taylor_green", "--out", o]);
    assert!(fail(&["init", "--scene", "nope", "--out", o, "--seed", "1"]).contains("nope"));
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"scene": "karman", "bogus": 1}"#).unwrap();
    fail(&["init", "--config", bad.to_str().unwrap(), "--out", o, "--seed", "1"]);
    fail(&["init", "--scene", "karman", "--seed", "1"]);
    fail(&["simulate", "--run", o, "--frames", "2"]);
    fail(&["metrics", tmp.path().join("missing.gsr").to_str().unwrap()]);
    fail(&["rasterize", "a.gsr", "--quantity", "pressure", "--out", "b.ppm"]);
    let garbage = tmp.path().join("g.gsr");
    fs::write(&garbage, "GSRSNAP 9\n").unwrap();
    fs::write(tmp.path().join("run.json"), r#"{"scene": "taylor_green"}"#).unwrap();
    assert!(fail(&["metrics", garbage.to_str().unwrap()]).contains("snapshot"));
}
