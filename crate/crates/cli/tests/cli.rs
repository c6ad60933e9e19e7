use std::path::Path;
use std::process::{Command, Output};

fn hsfl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsfl"))
        .args(args)
        .current_dir(cwd)
        .env_remove("HSFL_OUTPUT_DIR")
        .env_remove("HSFL_WORKERS")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

const SMALL: &str = "[scenario]\nn_devices = 6\n[experiment]\nrounds = 3\n";

#[test]
fn run_writes_results_and_replay_matches() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "small.toml", SMALL);
    let out = hsfl(
        &[
            "run",
            "--config",
            &config,
            "--out",
            "first",
            "--baseline",
            "era",
            "--seed",
            "5",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let results = std::fs::read_to_string(dir.path().join("first/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 3);
    assert!(results.lines().nth(2).unwrap().starts_with("era,"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("proposed"));

    let out = hsfl(
        &[
            "replay",
            "--manifest",
            "first/manifest.toml",
            "--out",
            "second",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let again = std::fs::read_to_string(dir.path().join("second/results.csv")).unwrap();
    assert_eq!(results, again);
}

#[test]
fn sweep_flag_and_all_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "small.toml", SMALL);
    let out = hsfl(
        &[
            "run",
            "--config",
            &config,
            "--out",
            "o",
            "--baseline",
            "all",
            "--sweep",
            "theta=0.1,0.9",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let results = std::fs::read_to_string(dir.path().join("o/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2 * 5);
    assert!(dir.path().join("o/timings.csv").exists());
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.toml",
        "[scenario]\nn_devices = 6\nbogus = 1\n",
    );
    let out = hsfl(&["run", "--config", &bad], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml:3"), "{err}");

    let theta = write(dir.path(), "theta.toml", "[optimizer]\ntheta = 1.5\n");
    assert_eq!(
        hsfl(&["run", "--config", &theta], dir.path()).status.code(),
        Some(2)
    );

    let out = hsfl(&["run", "--sweep", "theta=0.5,0.2,0.9"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_instances_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "far.toml",
        "[scenario]\nn_devices = 6\ncoverage_radius = 1.0\n",
    );
    let out = hsfl(&["run", "--config", &config, "--out", "o"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn newer_manifest_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "small.toml", SMALL);
    assert!(
        hsfl(&["run", "--config", &config, "--out", "o"], dir.path())
            .status
            .success()
    );
    let manifest = std::fs::read_to_string(dir.path().join("o/manifest.toml"))
        .unwrap()
        .replace("schema_version = 1", "schema_version = 7");
    let path = write(dir.path(), "future.toml", &manifest);
    let out = hsfl(&["replay", "--manifest", &path, "--out", "r"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema version 7"));
}

#[test]
fn bound_and_oracle_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let tiny = write(dir.path(), "tiny.toml", "[scenario]\nn_devices = 4\n");
    let out = hsfl(&["bound", "--config", &tiny, "--out", "b"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["bound_vs_split.csv", "bound_vs_heterogeneity.csv"] {
        let text = std::fs::read_to_string(dir.path().join("b").join(f)).unwrap();
        assert!(text.lines().count() > 1, "{f}");
    }
    let out = hsfl(&["oracle", "--config", &tiny, "--out", "c"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("c/oracle.json")).unwrap())
            .unwrap();
    assert!(report["relative_gap"].as_f64().unwrap() >= -1e-12);
}
