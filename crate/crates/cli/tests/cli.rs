//! End-to-end command-line checks on a downsized scenario.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bubblelab"))
}

fn small_scenario(dir: &Path) -> std::path::PathBuf {
    // shrink the default so the whole CLI flow stays in seconds
    let text = r#"{
        "d": 1,
        "bubbles": [
            {"w": 1.0, "x": [-4.0], "theta": 0.0},
            {"w": 1.0, "x": [4.0], "theta": 0.0}
        ],
        "T": 1.0,
        "grid": {"l": 10.0, "n": 1024},
        "dt": 4e-4,
        "schedule": {"base": 0.5, "ratio": 0.75, "n_max": 2},
        "sample_count": 9,
        "noise": {"n_noise": 1, "upsilon_star": 5, "amplitude": 0.02, "seed": 11},
        "residue": {"m": 4, "alpha_star": 1e-3},
        "cutoff_a": 20.0
    }"#;
    let path = dir.join("scenario.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn groundstate_and_construct_flow() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = small_scenario(tmp.path());
    let out = tmp.path().join("out");

    let status = bin()
        .args(["--scenario"])
        .arg(&scenario)
        .args(["--out"])
        .arg(&out)
        .arg("groundstate")
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("groundstate_d1.nlsf").exists());
    assert!(out.join("groundstate_d1.json").exists());

    let status = bin()
        .args(["--scenario"])
        .arg(&scenario)
        .args(["--out"])
        .arg(&out)
        .args(["construct", "--n", "1"])
        .status()
        .unwrap();
    assert!(status.success());
    let run_dir = out.join("run_1");
    for name in ["meta.json", "series.csv", "diagnostics.csv"] {
        assert!(run_dir.join(name).exists(), "missing {name}");
    }
    assert!(run_dir.join("fields/t_0000.nlsf").exists());
    assert!(run_dir.join("zfields/t_0000.nlsf").exists());

    // determinism: same seed, bit-identical series.csv
    let first = std::fs::read(run_dir.join("series.csv")).unwrap();
    let status = bin()
        .args(["--scenario"])
        .arg(&scenario)
        .args(["--out"])
        .arg(&out)
        .args(["construct", "--n", "1"])
        .status()
        .unwrap();
    assert!(status.success());
    let second = std::fs::read(run_dir.join("series.csv")).unwrap();
    assert_eq!(first, second, "series.csv must be bit-identical across runs");

    // self-describing directory: re-derivation needs nothing else
    let status = bin()
        .args(["--scenario"])
        .arg(&scenario)
        .args(["--out"])
        .arg(&out)
        .args(["diagnose", "--dir"])
        .arg(&run_dir)
        .status()
        .unwrap();
    assert!(status.success());

    let status = bin()
        .args(["--scenario"])
        .arg(&scenario)
        .args(["--out"])
        .arg(&out)
        .args(["decompose", "--dir"])
        .arg(&run_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let refit = std::fs::read(run_dir.join("series.csv")).unwrap();
    assert_eq!(first, refit, "re-fit from stored snapshots must reproduce the series");
}

#[test]
fn rejects_bad_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    std::fs::write(&path, r#"{"d": 3}"#).unwrap();
    let output = bin()
        .args(["--scenario"])
        .arg(&path)
        .arg("groundstate")
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert_eq!(output.status.code(), Some(1));
}
