use std::fs;
use std::process::{Command, Output};

fn satqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_satqkd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

const HEADER: &str = "loss_db,key_bits,n_sent,n_detected,m_sifted,qber,qber_adjusted,correction_A_or_Q1L,E1U_or_blank,delta,eps_bar,eps_pa,zero_key_cause";

const SMALL: &str = r#"
name = "small"
seed = 5

[source]
kind = "qd"
rep_rate_hz = 76.4e6
internal_loss_db = 15.0
multiphoton = 4.5e-6

[sweep]
start = 20.0
stop = 30.0
step = 5.0

[simulation]
num_slots = 20000000
"#;

#[test]
fn list_scenarios_names_all_builtins() {
    let out = satqkd(&["list-scenarios"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for name in ["wcp76", "qd76-15db", "qd76-4db", "wcp300", "qd300-4db"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn run_builtin_writes_csv_to_stdout() {
    let out = satqkd(&["run", "--scenario", "qd76-15db"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(HEADER));
    assert_eq!(lines.count(), 41);
    assert!(String::from_utf8_lossy(&out.stderr).contains("last positive key"));
}

#[test]
fn run_both_writes_two_files() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("small.toml");
    fs::write(&scenario, SMALL).unwrap();
    let out_path = dir.path().join("table.csv");
    let out = satqkd(&[
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--mode",
        "both",
        "--seed",
        "11",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let analytic = fs::read_to_string(&out_path).unwrap();
    let mc = fs::read_to_string(dir.path().join("table_mc.csv")).unwrap();
    assert_eq!(analytic.lines().count(), 4);
    assert_eq!(mc.lines().count(), 4);
    assert_eq!(mc.lines().next(), Some(HEADER));
    // 20 M simulated slots per point.
    assert!(mc.lines().nth(1).unwrap().split(',').nth(2) == Some("20000000"));
}

#[test]
fn mc_runs_are_reproducible_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("small.toml");
    fs::write(&scenario, SMALL).unwrap();
    let path = scenario.to_str().unwrap();
    let a = satqkd(&["run", "--scenario", path, "--mode", "mc", "--seed", "3"]);
    let b = satqkd(&["run", "--scenario", path, "--mode", "mc", "--seed", "3"]);
    let c = satqkd(&["run", "--scenario", path, "--mode", "mc", "--seed", "4"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn config_errors_exit_with_2() {
    assert_eq!(satqkd(&["run", "--scenario", "no-such-thing"]).status.code(), Some(2));
    assert_eq!(satqkd(&["run", "--scenario", "qd76-15db", "--mode", "fast"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.toml");
    fs::write(&empty, "").unwrap();
    let out = satqkd(&["run", "--scenario", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let zero_step = dir.path().join("zero.toml");
    fs::write(&zero_step, SMALL.replace("step = 5.0", "step = 0.0")).unwrap();
    let out = satqkd(&["run", "--scenario", zero_step.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step"));

    let out = satqkd(&["hbt", "--p1", "0.9", "--p2", "0.2", "--eta", "0.1", "--slots", "10"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("missing").join("out.csv");
    let out = satqkd(&["run", "--scenario", "qd76-15db", "--out", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));
}

#[test]
fn hbt_reports_counts_and_bound() {
    let out = satqkd(&[
        "hbt", "--p1", "0.033", "--p2", "0", "--eta", "0.06", "--slots", "10000000", "--seed", "1",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("coincidences: 0"));
    assert!(text.contains("multiphoton_bound: 0e0"));

    // Pairs at unit efficiency: counts are printed, but κ ≈ 1 leaves the
    // estimator denominator negative, which is a runtime error.
    let out = satqkd(&["hbt", "--p1", "0", "--p2", "1", "--eta", "1", "--slots", "100000", "--seed", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    let count = |key: &str| -> u64 {
        text.lines()
            .find_map(|l| l.strip_prefix(key))
            .unwrap()
            .trim()
            .parse()
            .unwrap()
    };
    assert_eq!(count("coincidences:") + count("solitary:"), 100_000);
    assert!(String::from_utf8_lossy(&out.stderr).contains("denominator"));
}
