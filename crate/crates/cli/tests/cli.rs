use std::path::Path;
use std::process::Command;

fn peerlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_peerlab"))
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name).display().to_string()
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = peerlab()
        .args(["run", "--config", &config("chain_noise_sweep.toml"), "--workers", "2", "--out"])
        .arg(&out)
        .args(["--set", "seeds=2", "--set", "learner.total_steps=300", "--set", "eval.episodes=0"])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.starts_with("experiment,run_id,seed,"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"], 8);
    assert_eq!(summary["failed"], 0);
}

#[test]
fn sweep_axes_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let status = peerlab()
        .args([
            "sweep",
            "--set",
            "kind=\"tiebreak\"",
            "--set",
            "tiebreak.trials=100",
            "--axis",
            "tiebreak.xi=0.1,0.2,0.3",
        ])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
}

#[test]
fn unknown_keys_fail_cleanly() {
    let out = peerlab().args(["run", "--set", "learner.bogus=1"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learner.bogus"));
}

#[test]
fn validators_report_pass_through_exit_code() {
    let ok = peerlab().args(["validate", "lemma1", "--samples", "20000"]).output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("max |z|"));
    let affine = peerlab().args(["validate", "affine", "--trials", "5"]).output().unwrap();
    assert!(affine.status.success());
}

#[test]
fn tiebreak_table_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.csv");
    let out = peerlab().args(["tiebreak", "--trials", "500", "--csv"]).arg(&path).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("stochastic_discrete"));
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    assert!(rdr.headers().unwrap().iter().any(|h| h == "delta_correct"));
    assert!(rdr.records().count() >= 3);
}
