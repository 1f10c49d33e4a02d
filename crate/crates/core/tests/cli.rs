use std::path::Path;
use std::process::{Command, Output};

use formation_cp::conformal::QuantileTable;
use formation_cp::harness::{report, ExperimentConfig, Method};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_formation-cp"))
        .args(args)
        .output()
        .expect("spawn formation-cp")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn calibrate_run_evaluate_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let c = cli(&["calibrate", "--trials", "120", "--seed", "3", "--out", out]);
    assert_eq!(code(&c), 0, "{}", String::from_utf8_lossy(&c.stderr));

    let table = QuantileTable::load(&tmp.path().join("quantile_table.toml")).unwrap();
    assert_eq!(table.config_hash, ExperimentConfig::default().hash());
    let again = QuantileTable::from_toml(&table.to_toml().unwrap()).unwrap();
    assert_eq!(again, table);

    let r = cli(&["run", "--method", "all", "--trials", "6", "--seed", "3", "--out", out]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(code(&cli(&["evaluate", "--out", out])), 0);
    let rep = cli(&["report", "--out", out]);
    assert_eq!(code(&rep), 0, "{}", String::from_utf8_lossy(&rep.stderr));
    for f in ["summary.csv", "coverage.csv", "metadata.json", "timeseries_risk_aware.csv"] {
        assert!(tmp.path().join(f).exists(), "missing {f}");
    }
    let s = report::load_summary(&tmp.path().join(report::summary_file_name(Method::GlobalHigh))).unwrap();
    assert_eq!(s.trials, 6);
    assert_eq!(s.seed, 3);
}

#[test]
fn zero_trials_is_an_empty_success() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(code(&cli(&["calibrate", "--trials", "120", "--out", out])), 0);
    assert_eq!(code(&cli(&["run", "--method", "nominal", "--trials", "0", "--out", out])), 0);
    assert_eq!(code(&cli(&["evaluate", "--method", "nominal", "--out", out])), 0);
    let s = report::load_summary(&tmp.path().join(report::summary_file_name(Method::Nominal))).unwrap();
    assert_eq!((s.trials, s.successes), (0, 0));
    assert_eq!((s.wilson_low, s.wilson_high), (0.0, 1.0));
}

#[test]
fn changed_config_is_a_hash_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(code(&cli(&["calibrate", "--trials", "120", "--out", out])), 0);
    let cfg = write_config(tmp.path(), "other.toml", "epsilon = 0.1\n");
    let r = cli(&["run", "--config", &cfg, "--trials", "2", "--out", out]);
    assert_eq!(code(&r), 4, "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn seed_and_method_do_not_change_the_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(code(&cli(&["calibrate", "--trials", "120", "--seed", "1", "--out", out])), 0);
    let r = cli(&["run", "--seed", "2", "--method", "global_low", "--trials", "2", "--out", out]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let unknown = write_config(tmp.path(), "unknown.toml", "no_such_field = 1\n");
    assert_eq!(code(&cli(&["calibrate", "--config", &unknown, "--out", out])), 2);
    let invalid = write_config(tmp.path(), "invalid.toml", "dt = -0.05\n");
    assert_eq!(code(&cli(&["calibrate", "--config", &invalid, "--out", out])), 2);
    assert_eq!(code(&cli(&["calibrate", "--config", "/nonexistent/c.toml", "--out", out])), 2);
    assert_eq!(code(&cli(&["run", "--method", "bogus", "--out", out])), 2);
}

#[test]
fn unvisited_group_exits_with_three() {
    // No estimate gets 50 below the boundary, so the high-risk group is empty.
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let cfg = write_config(
        tmp.path(),
        "empty_group.toml",
        "[taxonomy]\nthresholds = [-50.0, 0.45]\n",
    );
    let r = cli(&["calibrate", "--config", &cfg, "--trials", "5", "--out", out]);
    assert_eq!(code(&r), 3, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stderr).contains("B1"));
}

#[test]
fn oracle_subcommand_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let r = cli(&["oracle", "--trials", "25", "--out", out]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(tmp.path().join("oracle.json").exists());
}
