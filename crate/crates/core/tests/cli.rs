use std::path::Path;
use std::process::Command;

use wigner_lss::harness::read_report;

const BIN: &str = env!("CARGO_BIN_EXE_wigner-lss");

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn csv_rows(path: &Path) -> usize {
    csv::Reader::from_path(path).unwrap().records().count()
}

#[test]
fn runs_a_config_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "clt.toml",
        "kind = \"clt\"\nn = 40\ntrials = 100000\nseed = 3\ntest_function = { kind = \"polynomial\", coeffs = [0.0, 1.0] }\n",
    );
    let out = dir.path().join("out");
    let status = Command::new(BIN)
        .args(["clt", "--config"])
        .arg(&cfg)
        .args(["--trials", "400", "--seed", "5", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report = read_report(&out.join("report.json")).unwrap();
    let echoed = report.config.as_ref().unwrap();
    assert_eq!((echoed.trials, echoed.seed, echoed.n), (400, 5, 40));
    assert_eq!(csv_rows(&out.join("metrics.csv")), report.metrics.len());
    assert_eq!(csv_rows(&out.join("characteristic_function.csv")), 9);
    assert!(report.passed());
}

#[test]
fn failing_metric_gives_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    // The first base point sits too close to the spectral edge, which fails its metric.
    let cfg = write(
        dir.path(),
        "dbm.toml",
        "kind = \"dbm-moments\"\nn = 100\ntrials = 400\nseed = 1\nenergies = [1.99]\netas = [0.05]\n",
    );
    let out = dir.path().join("out");
    let status = Command::new(BIN).args(["dbm-moments", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(1));
    let report = read_report(&out.join("report.json")).unwrap();
    assert_eq!(report.failures().count(), 1);
}

#[test]
fn config_errors_give_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "w.toml", "kind = \"wegner\"\nn = 10\ntrials = 10\nseed = 1\n");
    let out = dir.path().join("out");
    // Subcommand and config disagree.
    let status = Command::new(BIN).args(["clt", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let status = Command::new(BIN).args(["wegner", "--config"]).arg(&cfg).args(["--trials", "0"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let status = Command::new(BIN).args(["wegner", "--config"]).arg(dir.path().join("missing.toml")).status().unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = wigner_lss::harness::ExperimentConfig::from_file(&path).unwrap();
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        count += 1;
    }
    assert!(count >= 8);
}
