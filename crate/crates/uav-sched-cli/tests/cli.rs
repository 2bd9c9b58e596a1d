//! CLI behavior: exit codes, flag precedence, and error reporting.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uav-sched"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn uav-sched")
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(
        &path,
        r#"
runs = 2

[scenario.distribution]
region_radius_m = 150.0
num_ground = 3
num_aerial = 2
aerial_altitude_range_m = [50.0, 150.0]
data_size_range_bits = [1e7, 3e7]
endurance_s = 25.0

[learn]
episodes = 150
epsilon_final = 0.05
"#,
    )
    .unwrap();
    path
}

#[test]
fn generate_then_oracle_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = run_in(dir.path(), &["generate", "--config", cfg.to_str().unwrap(), "--out", "w", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("w/scenario.toml").exists());

    let out = run_in(dir.path(), &["oracle", "--scenario", "w/scenario.toml", "--out", "w"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("optimal order:"), "{stdout}");
    assert!(dir.path().join("w/oracle.csv").exists());
}

#[test]
fn oracle_over_cap_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    // Default distribution has 20 users.
    let out = run_in(dir.path(), &["generate", "--out", "w", "--seed", "1"]);
    assert!(out.status.success());
    let out = run_in(dir.path(), &["oracle", "--scenario", "w/scenario.toml", "--out", "w"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("cap of 9"), "{stderr}");
}

#[test]
fn malformed_scenario_exits_1_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = run_in(dir.path(), &["generate", "--config", cfg.to_str().unwrap(), "--out", "w"]);
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("w/scenario.toml")).unwrap();
    fs::write(
        dir.path().join("broken.toml"),
        text.replace("endurance_s", "endurance_oops"),
    )
    .unwrap();
    let out = run_in(dir.path(), &["evaluate", "--scenario", "broken.toml", "--order", "0,1", "--out", "w"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("endurance"), "{stderr}");
}

#[test]
fn unknown_algorithm_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = run_in(
        dir.path(),
        &["sweep", "--config", cfg.to_str().unwrap(), "--algorithms", "deep-q", "--out", "w"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("deep-q"));
}

#[test]
fn snapshot_scenario_mismatch_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = cfg.to_str().unwrap();
    assert!(run_in(dir.path(), &["generate", "--config", c, "--out", "a", "--seed", "1"]).status.success());
    assert!(run_in(dir.path(), &["generate", "--config", c, "--out", "b", "--seed", "2"]).status.success());
    let out = run_in(
        dir.path(),
        &["train", "--config", c, "--scenario", "a/scenario.toml", "--out", "a", "--episodes", "50"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // Evaluating scenario B with tables trained on scenario A must refuse.
    let out = run_in(
        dir.path(),
        &["evaluate", "--scenario", "b/scenario.toml", "--qtables", "a/qtables.toml", "--out", "b"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("snapshot"));
}

#[test]
fn train_supports_both_learners() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = cfg.to_str().unwrap();
    assert!(run_in(dir.path(), &["generate", "--config", c, "--out", "w", "--seed", "4"]).status.success());
    for algo in ["double-q", "q-learning"] {
        let out = run_in(
            dir.path(),
            &[
                "train", "--config", c, "--scenario", "w/scenario.toml", "--algorithm", algo,
                "--episodes", "100", "--out", algo,
            ],
        );
        assert!(out.status.success(), "{algo}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(dir.path().join(algo).join("qtables.toml").exists());
        assert!(dir.path().join(algo).join("trace.csv").exists());
    }
    let out = run_in(
        dir.path(),
        &["train", "--config", c, "--scenario", "w/scenario.toml", "--algorithm", "random", "--out", "x"],
    );
    assert_eq!(out.status.code(), Some(1));
}
