use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 5

[scene]
room = [3.0, 3.0]
grid = [1, 1]
models = [2]
waypoints = [[1.0, 1.5], [2.0, 1.5]]
frames = 3
"#;

fn pipeline(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pipeline")).args(args).env("PIPELINE_THREADS", "1").output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn missing_config_exits_with_config_code() {
    let out = pipeline(&["run", "--config", "/nonexistent/config.toml", "--out", "/tmp/unused"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_values_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = write_config(dir.path(), "a.toml", "[scene]\nbogus = 1\n");
    let bad_value = write_config(dir.path(), "b.toml", "[pipeline]\nstep = 0.0\n");
    let bad_method = write_config(dir.path(), "c.toml", "[pipeline]\nmethod = \"icp\"\n");
    for cfg in [bad_key, bad_value, bad_method] {
        let out = pipeline(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{cfg}");
    }
}

#[test]
fn unknown_method_flag_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let out = pipeline(&["run", "--config", &cfg, "--method", "nope", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    assert_eq!(pipeline(&["run"]).status.code(), Some(2));
    assert_eq!(pipeline(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_with_runtime_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = pipeline(&["run", "--config", &cfg, "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn empty_trajectory_gives_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "empty.toml", &TINY.replace("frames = 3", "frames = 0"));
    let out_dir = dir.path().join("o");
    let out = pipeline(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(lines(&out_dir.join("detections.csv")).len(), 1);
    assert_eq!(lines(&out_dir.join("clusters.csv")).len(), 1);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = pipeline(&["run", "--config", &cfg, "--out", d.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 6);
    for name in names {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
    assert!(lines(&a.join("detections.csv")).len() > 1, "tiny scene should produce detections");
}

#[test]
fn plane_filtering_never_adds_detections() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", &TINY.replace("seed = 5", "seed = 5\n\n[noise]\ndepth_sigma = 0.1"));
    let (on, off) = (dir.path().join("on"), dir.path().join("off"));
    for (d, flag) in [(&on, "on"), (&off, "off")] {
        let out = pipeline(&["run", "--config", &cfg, "--plane-estimation", flag, "--out", d.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(lines(&on.join("detections.csv")).len() <= lines(&off.join("detections.csv")).len());
}

#[test]
fn bench_covers_every_method_step_and_plane_setting() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let out_dir = dir.path().join("bench");
    let out = pipeline(&["bench", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = lines(&out_dir.join("bench.csv"));
    assert_eq!(rows.len(), 25);
    for method in ["d2co", "d2co-e", "d2co-it"] {
        assert_eq!(rows.iter().filter(|r| r.starts_with(&format!("{method},"))).count(), 8);
    }
}

#[test]
fn gen_scene_writes_building_and_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let out_dir = dir.path().join("scene");
    let out = pipeline(&["gen-scene", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["building.xml", "references.csv", "trajectory.csv", "model_2.txt"] {
        assert!(out_dir.join(name).exists(), "{name}");
    }
    assert_eq!(lines(&out_dir.join("references.csv")).len(), 2);
}
