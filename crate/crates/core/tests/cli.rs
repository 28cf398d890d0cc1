use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

use weaktraj::config::{RunConfig, OUTPUT_ENV};
use weaktraj::io::read_ensemble;

fn small_config(dir: &Path) -> PathBuf {
    config_with_planes(dir, vec![2.0, 2.5])
}

fn config_with_planes(dir: &Path, z_schedule: Vec<f64>) -> PathBuf {
    let mut cfg = RunConfig::standard();
    cfg.z_schedule = z_schedule;
    cfg.n_trajectories = 5;
    cfg.output_dir = dir.join("out");
    let p = dir.join("config.json");
    cfg.save(&p).unwrap();
    p
}

fn weaktraj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weaktraj"))
        .args(args)
        .env_remove(OUTPUT_ENV)
        .output()
        .unwrap()
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = walk(dir)
        .into_iter()
        .map(|p| p.strip_prefix(dir).unwrap().display().to_string())
        .collect();
    names.sort();
    names
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn synthesize_writes_one_frame_per_plane() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    ok(weaktraj(&["synthesize", "--config", cfg.to_str().unwrap()]));
    assert_eq!(
        listing(&tmp.path().join("out")),
        ["frames/frame_000.csv", "frames/frame_001.csv", "ground_truth.csv", "manifest_synthesize.json"]
    );
}

#[test]
fn synthesize_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("out");
    ok(weaktraj(&["synthesize", "--config", cfg.to_str().unwrap()]));
    let first: Vec<_> = ["frames/frame_000.csv", "frames/frame_001.csv", "ground_truth.csv"]
        .iter()
        .map(|f| std::fs::read(out.join(f)).unwrap())
        .collect();
    ok(weaktraj(&["synthesize", "--config", cfg.to_str().unwrap()]));
    for (f, bytes) in ["frames/frame_000.csv", "frames/frame_001.csv", "ground_truth.csv"].iter().zip(first) {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), bytes, "{f}");
    }
}

#[test]
fn unordered_schedule_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = RunConfig::standard();
    cfg.z_schedule = vec![3.0, 2.0];
    cfg.output_dir = tmp.path().join("out");
    let p = tmp.path().join("config.json");
    cfg.save(&p).unwrap();
    let out = weaktraj(&["synthesize", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("z_schedule"));
}

#[test]
fn malformed_config_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("config.json");
    std::fs::write(&p, "{ not json").unwrap();
    let out = weaktraj(&["synthesize", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_frame_names_its_plane() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    ok(weaktraj(&["synthesize", "--config", cfg.to_str().unwrap()]));
    std::fs::remove_file(tmp.path().join("out/frames/frame_001.csv")).unwrap();
    let out = weaktraj(&["reconstruct", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("z-index 1"));
}

#[test]
fn reconstruct_and_compare() {
    let tmp = TempDir::new().unwrap();
    // correlations need at least three planes
    let cfg = config_with_planes(tmp.path(), vec![2.0, 2.5, 3.0, 3.5]);
    let c = cfg.to_str().unwrap();
    ok(weaktraj(&["synthesize", "--config", c]));
    ok(weaktraj(&["reconstruct", "--config", c]));
    ok(weaktraj(&["--mode", "legacy", "reconstruct", "--config", c]));
    let out = tmp.path().join("out");
    let corrected = out.join("reconstruct/corrected");
    for f in ["trajectories.csv", "data_bohm.csv", "density_final.csv", "report.json", "overlay.csv", "manifest.json"] {
        assert!(corrected.join(f).exists(), "{f}");
    }
    assert!(out.join("reconstruct/legacy/trajectories.csv").exists());

    // an ensemble against itself correlates perfectly
    let traj = corrected.join("trajectories.csv");
    let cmp = tmp.path().join("self");
    ok(weaktraj(&[
        "compare",
        "--config",
        c,
        "--a",
        traj.to_str().unwrap(),
        "--b",
        traj.to_str().unwrap(),
        "--out",
        cmp.to_str().unwrap(),
    ]));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cmp.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["r_avg"], 1.0);

    // the overlay keeps the two series apart
    let overlay = std::fs::read_to_string(corrected.join("overlay.csv")).unwrap();
    let series: std::collections::BTreeSet<&str> = overlay
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(series.len(), 2, "{series:?}");
    let (ens, _) = read_ensemble(&traj).unwrap();
    assert_eq!(ens.n_trajectories(), 5);
}

#[test]
fn frames_from_another_config_need_force() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let c = cfg.to_str().unwrap();
    ok(weaktraj(&["synthesize", "--config", c]));
    let out = weaktraj(&["--seed", "99", "reconstruct", "--config", c]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--force"));
    ok(weaktraj(&["--seed", "99", "--force", "reconstruct", "--config", c]));
}

#[test]
fn output_directory_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let elsewhere = tmp.path().join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_weaktraj"))
        .args(["synthesize", "--config", cfg.to_str().unwrap()])
        .env(OUTPUT_ENV, &elsewhere)
        .output()
        .unwrap();
    ok(out);
    assert!(elsewhere.join("frames/frame_000.csv").exists());
    assert!(!tmp.path().join("out").exists());
}
