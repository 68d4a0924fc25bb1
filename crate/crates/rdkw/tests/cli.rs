//! End-to-end tests of the `rdkw` binary: exit codes, output shapes, file
//! dumps, and the flag/config-file precedence contract.

use std::path::PathBuf;
use std::process::{Command, Output};

fn rdkw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdkw"))
        .args(args)
        .output()
        .expect("binary spawns")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf8 stderr")
}

/// Unique per test name and process so parallel tests never collide.
fn temp_path(name: &str) -> PathBuf {
    let mut path = std::env::temp_dir();
    path.push(format!("rdkw-cli-{}-{name}", std::process::id()));
    path
}

fn extract_nmse(text: &str) -> f64 {
    text.lines()
        .find_map(|line| line.strip_prefix("nmse="))
        .expect("nmse line present")
        .parse()
        .expect("nmse parses")
}

#[test]
fn help_and_version_exit_cleanly() {
    assert_eq!(code(&rdkw(&["--help"])), 0);
    assert_eq!(code(&rdkw(&["--version"])), 0);
    assert_eq!(code(&rdkw(&["no-such-subcommand"])), 2);
}

#[test]
fn verify_reports_circulant_cycle() {
    let out = rdkw(&["verify", "--p", "10", "--source", "circulant"]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("source=circulant p=10 P=11"), "{text}");
    assert!(text.contains("p1_residual="), "{text}");
    assert!(text.contains("p2_residual="), "{text}");
    assert!(text.contains("max_col_norm="), "{text}");
}

#[test]
fn verify_reports_hadamard_power_of_two_length() {
    let out = rdkw(&["verify", "--p", "10", "--source", "hadamard"]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    assert!(stdout_of(&out).contains("P=16"));
}

#[test]
fn verify_rejects_zero_dimension() {
    assert_eq!(code(&rdkw(&["verify", "--p", "0"])), 2);
}

#[test]
fn verify_rejects_unknown_source() {
    let out = rdkw(&["verify", "--p", "4", "--source", "fourier"]);
    assert_eq!(code(&out), 2);
    assert!(stderr_of(&out).contains("fourier"));
}

#[test]
fn verify_dump_writes_the_cycle() {
    let path = temp_path("dump.csv");
    let out = rdkw(&["verify", "--p", "4", "--dump", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).ok();
    let rows: Vec<&str> = text.lines().collect();
    // circulant cycle for p=4 holds p+1 directions of 4 coordinates each
    assert_eq!(rows.len(), 5);
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 4);
        for field in fields {
            assert!(field.parse::<f64>().unwrap().is_finite());
        }
    }
}

#[test]
fn run_rejects_unknown_algorithm() {
    let out = rdkw(&["run", "--alg", "zzz"]);
    assert_eq!(code(&out), 2);
    assert!(stderr_of(&out).contains("zzz"));
}

#[test]
fn run_gates_invalid_schedules_unless_forced() {
    let out = rdkw(&["run", "--alpha", "0.6", "--gamma", "0.2", "--budget", "200"]);
    assert_eq!(code(&out), 3);
    assert!(
        stderr_of(&out).contains("2(alpha-gamma)"),
        "{}",
        stderr_of(&out)
    );

    let out = rdkw(&[
        "run", "--alpha", "0.6", "--gamma", "0.2", "--budget", "200", "--force",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
}

#[test]
fn run_defaults_reach_small_error() {
    let out = rdkw(&["run"]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("diverged=false"), "{text}");
    assert!(extract_nmse(&text) < 1e-3, "{text}");
}

#[test]
fn run_is_seed_deterministic() {
    let args = ["run", "--alg", "rdkw-2r", "--sigma", "0.01", "--seed", "3"];
    let first = rdkw(&args);
    let second = rdkw(&args);
    assert_eq!(code(&first), 0);
    assert_eq!(first.stdout, second.stdout);

    let other = rdkw(&["run", "--alg", "rdkw-2r", "--sigma", "0.01", "--seed", "4"]);
    assert_ne!(first.stdout, other.stdout);
}

#[test]
fn run_overflow_reports_divergence() {
    // one-sided estimates scale with the raw measurement, so a huge start
    // overflows within a couple of iterations
    let out = rdkw(&[
        "run",
        "--alg",
        "dspkw-1c",
        "--objective",
        "fourth-order",
        "--theta0",
        "1e40",
        "--budget",
        "200",
    ]);
    assert_eq!(code(&out), 4);
    assert!(stdout_of(&out).contains("diverged=true"));
}

#[test]
fn run_trajectory_dumps_squared_errors() {
    let path = temp_path("traj.csv");
    let out = rdkw(&["run", "--budget", "200", "--trajectory", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).ok();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,squared_error"));
    let rows: Vec<&str> = lines.collect();
    // initial point plus one entry per iteration (two simulations each)
    assert_eq!(rows.len(), 101);
    assert!(rows[0].starts_with("0,"));
    assert!(rows[100].starts_with("100,"));
    let mut first = f64::NAN;
    let mut last = f64::NAN;
    for (idx, row) in rows.iter().enumerate() {
        let (n, err) = row.split_once(',').unwrap();
        assert_eq!(n.parse::<usize>().unwrap(), idx);
        let err: f64 = err.parse().unwrap();
        assert!(err.is_finite() && err >= 0.0);
        if idx == 0 {
            first = err;
        }
        last = err;
    }
    assert!(last < first, "no progress: {last} vs {first}");
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let path = temp_path("settings.conf");
    std::fs::write(&path, "# defaults\nbudget = 400\nseed = 7\nsigma = 0.01\n").unwrap();

    let from_config = rdkw(&["run", "--config", path.to_str().unwrap()]);
    let from_flags = rdkw(&["run", "--budget", "400", "--seed", "7", "--sigma", "0.01"]);
    assert_eq!(code(&from_config), 0, "{}", stderr_of(&from_config));
    assert_eq!(from_config.stdout, from_flags.stdout);

    let overridden = rdkw(&["run", "--config", path.to_str().unwrap(), "--seed", "8"]);
    std::fs::remove_file(&path).ok();
    assert_eq!(code(&overridden), 0);
    assert!(stdout_of(&overridden).contains("seed=8"));
    assert_ne!(overridden.stdout, from_config.stdout);
}

#[test]
fn config_with_unknown_key_is_a_usage_error() {
    let path = temp_path("bad.conf");
    std::fs::write(&path, "bogus = 1\n").unwrap();
    let out = rdkw(&["run", "--config", path.to_str().unwrap()]);
    std::fs::remove_file(&path).ok();
    assert_eq!(code(&out), 2);
    assert!(stderr_of(&out).contains("bogus"));
}

#[test]
fn missing_config_file_is_a_usage_error() {
    let out = rdkw(&["run", "--config", "/nonexistent/rdkw.conf"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn bench_small_table_writes_csv() {
    let path = temp_path("bench.csv");
    let out = rdkw(&[
        "bench", "--table", "1", "--reps", "3", "--seed", "5", "--csv",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let text = stdout_of(&out);
    for name in ["RDKW-2R", "RDKW-2H", "DSPKW-2C"] {
        assert!(text.contains(name), "{text}");
    }
    // table protocols run both noise levels
    assert!(text.contains("sigma=0 "), "{text}");
    assert!(text.contains("sigma=0.01 "), "{text}");

    let csv = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).ok();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("algorithm,objective,sigma,budget,replication,seed,nmse,diverged")
    );
    let rows: Vec<&str> = lines.collect();
    // 2 noise levels x 3 algorithms x 3 replications
    assert_eq!(rows.len(), 18);
    for row in &rows {
        assert_eq!(row.split(',').count(), 8);
    }
}

#[test]
fn bench_rejects_out_of_range_table() {
    assert_eq!(code(&rdkw(&["bench", "--table", "5"])), 2);
}

#[test]
fn bench_custom_plan_respects_algorithm_list() {
    let out = rdkw(&[
        "bench", "--alg", "dspkw-2c,rdkw-2h", "--reps", "2", "--budget", "400",
        "--sigma", "0.01",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("DSPKW-2C"), "{text}");
    assert!(text.contains("RDKW-2H"), "{text}");
    assert!(!text.contains("RDKW-2R"), "{text}");
    // a custom plan with --sigma runs exactly one noise level
    assert_eq!(text.matches("objective=").count(), 1, "{text}");
}
