use std::path::Path;
use std::process::Command;

use privlq::harness::{
    emit, run_experiment, sidecar_path, ExperimentConfig, OutputFormat, CSV_HEADER,
};
use privlq::Error;

const BIN: &str = env!("CARGO_BIN_EXE_privlq");

fn config_json(k: usize, replicas: usize) -> String {
    format!(
        r#"{{
  "instance": {{"n": 2, "d": 1, "H": 5, "K": {k}, "gamma": 0.5,
               "c_a": 0.5, "c_b": 0.8, "c_w": 0.1, "c_cost": 1.0, "seed": 11}},
  "mode": {{"kind": "sweep", "epsilons": [0.1, 1.0, 10.0], "delta": 0.01,
           "include_non_private": true, "lambda": 0.1}},
  "replicas": {replicas},
  "search_budget": 16
}}"#
    )
}

fn config(k: usize, replicas: usize) -> ExperimentConfig {
    ExperimentConfig::from_json(&config_json(k, replicas)).unwrap()
}

#[test]
fn replicas_get_distinct_seeds_and_one_hash() {
    let out = run_experiment(&config(4, 3)).unwrap();
    let baseline: Vec<_> = out
        .traces
        .iter()
        .filter(|t| t.variant == "non_private")
        .collect();
    let seeds: Vec<u64> = baseline.iter().map(|t| t.seed).collect();
    assert_eq!(seeds, vec![11, 12, 13]);
    assert!(out.traces.iter().all(|t| t.config_hash == out.config_hash));
}

#[test]
fn sweep_yields_each_epsilon_plus_baseline() {
    let out = run_experiment(&config(4, 1)).unwrap();
    let labels: Vec<_> = out.traces.iter().map(|t| t.variant.as_str()).collect();
    assert_eq!(
        labels,
        [
            "non_private",
            "private_eps_0.1",
            "private_eps_1",
            "private_eps_10"
        ]
    );
    assert_eq!(out.calibration.len(), 4);
    let eps1 = &out.calibration[2];
    assert!((eps1.epsilon_actual.unwrap() - 1.0).abs() < 1e-9);
    assert!((eps1.lambda_max - 3.0 * eps1.lambda_min).abs() < 1e-9 * eps1.lambda_max);
}

#[test]
fn csv_has_fixed_header_and_one_row_per_episode() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let out = run_experiment(&config(4, 2)).unwrap();
    let written = emit(&out, OutputFormat::Csv, &path).unwrap();
    assert_eq!(written, vec![path.clone(), sidecar_path(&path)]);

    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "variant,seed,episode,episode_regret,cumulative_regret,epsilon,delta"
    );
    assert_eq!(
        CSV_HEADER.join(","),
        "variant,seed,episode,episode_regret,cumulative_regret,epsilon,delta"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4 * 2 * 4);
    for row in &rows {
        if row[0] == "non_private" {
            assert_eq!((row[5], row[6]), ("", ""));
        } else {
            assert!(!row[5].is_empty() && row[6] == "0.01");
        }
    }
    let per_run = rows
        .iter()
        .filter(|r| r[0] == "private_eps_1" && r[1] == "12")
        .count();
    assert_eq!(per_run, 4);

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["config"]["instance"]["K"], 4);
    for key in [
        "sigma_gram",
        "sigma_cross",
        "big_lambda",
        "eta",
        "nu",
        "epsilon_actual",
    ] {
        assert!(meta["calibration"][1][key].is_number(), "missing {key}");
    }
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(24, 2);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    emit(&run_experiment(&cfg).unwrap(), OutputFormat::Csv, &a).unwrap();
    emit(&run_experiment(&cfg).unwrap(), OutputFormat::Csv, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn empty_traces_create_no_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("none.csv");
    let mut out = run_experiment(&config(2, 1)).unwrap();
    out.traces.clear();
    assert!(matches!(
        emit(&out, OutputFormat::Csv, &path),
        Err(Error::EmptyTraces)
    ));
    assert!(!path.exists());
    assert!(!sidecar_path(&path).exists());
}

#[test]
fn io_errors_surface() {
    let out = run_experiment(&config(2, 1)).unwrap();
    let missing = Path::new("/nonexistent-dir-for-privlq/out.csv");
    assert!(matches!(
        emit(&out, OutputFormat::Csv, missing),
        Err(Error::Io(_))
    ));
}

#[test]
fn json_output_carries_traces_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    let out = run_experiment(&config(3, 1)).unwrap();
    emit(&out, OutputFormat::Json, &path).unwrap();
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(doc["traces"].as_array().unwrap().len(), 4);
    assert_eq!(doc["traces"][0]["records"].as_array().unwrap().len(), 3);
    assert_eq!(doc["config_hash"], out.config_hash);
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("cfg.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn cli_run_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config_json(4, 1));
    let out = dir.path().join("r.csv");
    let status = Command::new(BIN)
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--seeds", "2"])
        .env_remove("PRIVLQ_OUT_DIR")
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 2 * 4);
    assert!(sidecar_path(&out).exists());
}

#[test]
fn cli_output_directory_override() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("elsewhere");
    let cfg = write_config(dir.path(), &config_json(2, 1));
    let status = Command::new(BIN)
        .args([
            "run",
            "--format",
            "json",
            "--out",
            "ignored/dir/result.json",
            "--config",
        ])
        .arg(&cfg)
        .env("PRIVLQ_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    assert!(target.join("result.json").exists());
}

#[test]
fn cli_config_error_is_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &config_json(4, 1).replace("\"replicas\": 1", "\"replicas\": 0"),
    );
    let output = Command::new(BIN)
        .args(["run", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&output.stderr).unwrap();
    assert_eq!(err["error"], "config");
    assert_eq!(err["field"], "replicas");
}

#[test]
fn cli_sweep_overrides_epsilons() {
    let dir = tempfile::tempdir().unwrap();
    let text = config_json(2, 1).replace(
        r#""mode": {"kind": "sweep", "epsilons": [0.1, 1.0, 10.0], "delta": 0.01,
           "include_non_private": true, "lambda": 0.1}"#,
        r#""mode": {"kind": "non_private"}"#,
    );
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("s.csv");
    let output = Command::new(BIN)
        .args([
            "sweep",
            "--epsilons",
            "0.5,2",
            "--delta",
            "0.001",
            "--include-non-private",
            "--config",
        ])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .env_remove("PRIVLQ_OUT_DIR")
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    let variants: std::collections::BTreeSet<_> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    assert_eq!(
        variants.into_iter().collect::<Vec<_>>(),
        ["non_private", "private_eps_0.5", "private_eps_2"]
    );
}

#[test]
fn cli_calibrate_prints_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config_json(64, 1));
    let output = Command::new(BIN)
        .args(["calibrate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(output.status.success());
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(report.as_array().unwrap().len(), 4);
    assert!(report[3]["sigma_gram"].as_f64().unwrap() > 0.0);
}
