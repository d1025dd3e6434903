//! End-to-end tests of the `descent` binary: exit codes, CSV shapes, pinned
//! example rows, and manifest replay.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn descent(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_descent"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn race_emits_rows_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let out = descent(
        &[
            "race",
            "--function",
            "q",
            "--start",
            "1,1",
            "--optimizer",
            "nasgd",
            "--alpha",
            "1.9",
            "--thresholds",
            "1e-2,1e-4,1e-6,1e-8,1e-10",
        ],
        tmp.path(),
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(tmp.path(), "race.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "optimizer,hyperparams,threshold,steps,diverged"
    );
    assert_eq!(csv.lines().count(), 6);
    // the deepest threshold is crossed on update 14
    assert!(
        csv.contains("NaSGD,\"alpha=1.9\",0.0000000001,14,false"),
        "csv: {csv}"
    );
    let manifest = read(tmp.path(), "manifest.json");
    assert!(manifest.contains("\"status\": \"complete\""));
    assert!(manifest.contains("\"race.csv\""));
}

#[test]
fn race_rejects_empty_thresholds() {
    let tmp = TempDir::new().unwrap();
    let out = descent(
        &[
            "race",
            "--function",
            "q",
            "--optimizer",
            "sgd",
            "--eta",
            "0.1",
            "--thresholds",
            "",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("thresholds"), "stderr: {stderr}");
    // config rejection leaves no partial CSV behind
    assert!(!tmp.path().join("race.csv").exists());
}

#[test]
fn race_rejects_unknown_function() {
    let tmp = TempDir::new().unwrap();
    let out = descent(
        &[
            "race",
            "--function",
            "sphere",
            "--optimizer",
            "sgd",
            "--eta",
            "0.1",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("function"));
}

#[test]
fn race_divergence_is_a_successful_recorded_outcome() {
    let tmp = TempDir::new().unwrap();
    let out = descent(
        &[
            "race",
            "--function",
            "rosenbrock",
            "--start",
            "-3,-4",
            "--optimizer",
            "sgd",
            "--eta",
            "0.001",
            "--thresholds",
            "1e2,1e0",
            "--max-steps",
            "10000",
        ],
        tmp.path(),
    );
    assert!(out.status.success());
    let csv = read(tmp.path(), "race.csv");
    assert!(csv.contains(",diverged,true"), "csv: {csv}");
}

#[test]
fn trace_row_counts_match_steps() {
    let tmp = TempDir::new().unwrap();
    let out = descent(
        &[
            "trace",
            "--function",
            "q",
            "--optimizer",
            "nasgd",
            "--alpha",
            "0.007",
            "--start",
            "1,1",
            "--steps",
            "6000",
        ],
        tmp.path(),
    );
    assert!(out.status.success());
    let csv = read(tmp.path(), "trace.csv");
    // header + start point + 6000 updates
    assert_eq!(csv.lines().count(), 6002);

    let tmp2 = TempDir::new().unwrap();
    let out = descent(
        &[
            "trace",
            "--function",
            "q",
            "--optimizer",
            "nasgd",
            "--alpha",
            "0.007",
            "--start",
            "1,1",
            "--steps",
            "0",
        ],
        tmp2.path(),
    );
    assert!(out.status.success());
    assert_eq!(read(tmp2.path(), "trace.csv").lines().count(), 2);
}

#[test]
fn diverged_trace_ends_with_a_status_row() {
    let tmp = TempDir::new().unwrap();
    let out = descent(
        &[
            "trace",
            "--function",
            "q",
            "--optimizer",
            "sgd",
            "--eta",
            "1000",
            "--start",
            "1,1",
            "--steps",
            "100",
        ],
        tmp.path(),
    );
    assert!(out.status.success());
    let csv = read(tmp.path(), "trace.csv");
    let last = csv.lines().last().unwrap();
    assert!(
        last.ends_with("diverged,diverged,diverged"),
        "last row: {last}"
    );
    assert!(csv.lines().count() < 102);
}

#[test]
fn field_grid_matches_the_hand_value() {
    let tmp = TempDir::new().unwrap();
    let out = descent(
        &[
            "field-grid",
            "--function",
            "q",
            "--x-min",
            "0",
            "--x-max",
            "0",
            "--x-count",
            "1",
            "--y-min",
            "1",
            "--y-max",
            "1",
            "--y-count",
            "1",
            "--eta-star",
            "1",
            "--alpha-star",
            "1",
        ],
        tmp.path(),
    );
    assert!(out.status.success());
    let csv = read(tmp.path(), "field_grid.csv");
    assert_eq!(csv, "x,y,ratio\n0,1,0.5\n");
}

#[test]
fn field_grid_emits_inf_at_a_flat_nonzero_point() {
    // single-point grid at the origin of q: value equals the bound, ratio 0
    let tmp = TempDir::new().unwrap();
    let out = descent(
        &[
            "field-grid",
            "--function",
            "q",
            "--x-min",
            "0",
            "--x-max",
            "0",
            "--x-count",
            "1",
            "--y-min",
            "0",
            "--y-max",
            "0",
            "--y-count",
            "1",
        ],
        tmp.path(),
    );
    assert!(out.status.success());
    assert_eq!(read(tmp.path(), "field_grid.csv"), "x,y,ratio\n0,0,0\n");
}

#[test]
fn rosetta_emits_translation_columns() {
    let tmp = TempDir::new().unwrap();
    let out = descent(
        &[
            "rosetta",
            "--function",
            "q",
            "--optimizer",
            "sgd",
            "--eta",
            "0.1",
            "--start",
            "1,1",
            "--steps",
            "5",
        ],
        tmp.path(),
    );
    assert!(out.status.success());
    let csv = read(tmp.path(), "rosetta.csv");
    assert_eq!(
        csv.lines().next().unwrap(),
        "step,equivalent_eta,equivalent_alpha,loss"
    );
    assert_eq!(csv.lines().count(), 6);
    // first step from (1,1): alpha_eq = 0.1 * 257 / 8.5
    let first = csv.lines().nth(1).unwrap();
    assert!(first.starts_with("0,0.1,3.023529411764706"), "row: {first}");
}

#[test]
fn layer_match_single_run_curve_shape() {
    let tmp = TempDir::new().unwrap();
    let out = descent(
        &[
            "layer-match",
            "--optimizer",
            "nasgd",
            "--alpha",
            "0.7",
            "--runs",
            "1",
            "--steps",
            "200",
            "--record-every",
            "10",
            "--seed",
            "5",
        ],
        tmp.path(),
    );
    assert!(out.status.success());
    let csv = read(tmp.path(), "layer_match.csv");
    assert_eq!(
        csv.lines().next().unwrap(),
        "step,mean_log10_distance,mean_equivalent_eta,mean_equivalent_alpha,n_active_runs"
    );
    assert_eq!(csv.lines().count(), 21);
    for line in csv.lines().skip(1) {
        assert!(line.ends_with(",1"), "single active run expected: {line}");
    }
}

#[test]
fn manifest_replay_reproduces_bytes() {
    let tmp1 = TempDir::new().unwrap();
    let out = descent(
        &[
            "layer-match",
            "--optimizer",
            "adam",
            "--eta",
            "0.001",
            "--runs",
            "2",
            "--steps",
            "150",
            "--seed",
            "99",
        ],
        tmp1.path(),
    );
    assert!(out.status.success());
    let manifest = tmp1.path().join("manifest.json");

    let tmp2 = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_descent"))
        .args(["layer-match", "--config"])
        .arg(&manifest)
        .arg("--out")
        .arg(tmp2.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        read(tmp1.path(), "layer_match.csv"),
        read(tmp2.path(), "layer_match.csv")
    );
    assert_eq!(
        read(tmp1.path(), "manifest.json"),
        read(tmp2.path(), "manifest.json")
    );
}

#[test]
fn toml_config_drives_a_race_with_flag_overrides() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("race.toml");
    std::fs::write(
        &config,
        r#"
task = "function-race"
function = "q"
start = [1.0, 1.0]
thresholds = [1e-2, 1e-4]
max_steps = 10000

[[entries]]
kind = "sgd"
eta = 0.1156
"#,
    )
    .unwrap();
    let outdir = tmp.path().join("out");
    let out = Command::new(env!("CARGO_BIN_EXE_descent"))
        .args(["race", "--config"])
        .arg(&config)
        .args(["--thresholds", "1e-2"])
        .arg("--out")
        .arg(&outdir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(&outdir, "race.csv");
    // the flag override narrowed the ladder to one threshold
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.contains("SGD,\"eta=0.1156\",0.01,22,false"));
}

#[test]
fn subcommand_and_config_task_must_agree() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("spec.toml");
    std::fs::write(
        &config,
        "task = \"layer-match\"\n[optimizer]\nkind = \"nasgd\"\nalpha = 0.7\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_descent"))
        .args(["race", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("task mismatch"));
}

#[test]
fn hybrid_emits_five_series() {
    let tmp = TempDir::new().unwrap();
    let out = descent(
        &[
            "hybrid",
            "--runs",
            "2",
            "--steps",
            "200",
            "--record-every",
            "20",
            "--seed",
            "3",
        ],
        tmp.path(),
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(tmp.path(), "hybrid.csv");
    assert_eq!(
        csv.lines().next().unwrap(),
        "series,step,mean_log10_distance,mean_lr,n_active_runs"
    );
    let series: std::collections::BTreeSet<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(series.len(), 5, "series: {series:?}");
    assert!(series.contains("na070"));
    assert!(series.contains("alpha-monitor"));
}
