//! End-to-end checks of the `der` binary: exit codes, artifacts on disk,
//! and the pipeline from training through plotting.

use std::path::Path;
use std::process::{Command, Output};

fn der(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_der"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

const QUICK_CONFIG: &str = r#"
env = "matrix"
mixer = "vdn"
mode = "der"
t_max = 120
batch_episodes = 4
buffer_capacity = 64
agent_hidden = 8
mixer_embed = 4
hyper_hidden = 4
target_period = 10
epsilon_steps = 60
eval_every = 40
eval_episodes = 3
"#;

#[test]
fn train_then_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), QUICK_CONFIG).unwrap();

    let out = der(
        &["train", "--config", "run.toml", "--seed", "5", "--out", "out/run"],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("eval[0]"), "{stdout}");
    assert!(dir.path().join("out/run/metrics.csv").exists());
    assert!(dir.path().join("out/run/model.ckpt").exists());
    assert!(dir.path().join("out/run/config.toml").exists());

    // Directory input resolves to the metrics file inside it.
    let out = der(&["plot", "--in", "out/run", "--out", "curve.svg"], dir.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let svg = std::fs::read_to_string(dir.path().join("curve.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
}

#[test]
fn compare_writes_per_run_files_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), QUICK_CONFIG).unwrap();

    let out = der(
        &[
            "compare",
            "--config",
            "run.toml",
            "--modes",
            "joint-baseline,divide-only",
            "--seeds",
            "1,2",
            "--out",
            "cmp",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("cmp/summary.csv").exists());
    assert!(dir.path().join("cmp/joint-baseline/seed-1/metrics.csv").exists());
    assert!(dir.path().join("cmp/divide-only/seed-2/model.ckpt").exists());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("joint-baseline: final eval"), "{stdout}");

    // Plotting the sweep directory groups each mode's seeds into a band.
    let out = der(&["plot", "--in", "cmp", "--out", "band.svg"], dir.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let svg = std::fs::read_to_string(dir.path().join("band.svg")).unwrap();
    assert!(svg.contains("class=\"band\""));
    assert!(svg.contains(">joint-baseline<") && svg.contains(">divide-only<"));
}

#[test]
fn missing_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = der(&["train", "--config", "absent.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "gamma = 2.0\n").unwrap();
    let out = der(&["train", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));

    std::fs::write(dir.path().join("typo.toml"), "gama = 0.5\n").unwrap();
    let out = der(&["train", "--config", "typo.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_mode_in_compare_exits_one_before_training() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), QUICK_CONFIG).unwrap();
    let out = der(
        &["compare", "--config", "run.toml", "--modes", "der,mystery", "--seeds", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery"));
}

#[test]
fn malformed_metrics_exit_two_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("metrics.csv"),
        "t_step,L_tot,L_ind,mean_abs_delta,eta,epsilon,selected_count,eval_return\nbroken\n",
    )
    .unwrap();
    let out = der(&["plot", "--in", "metrics.csv", "--out", "x.svg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn bad_flags_exit_one_and_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = der(&["train"], dir.path()); // missing --config
    assert_eq!(out.status.code(), Some(1));
    let out = der(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("train"));
}
