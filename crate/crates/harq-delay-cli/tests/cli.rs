use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_harq-delay"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("harq-delay-cli-tests");
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write_config(name: &str, body: &str) -> PathBuf {
    let path = tmp(name);
    fs::write(&path, body).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

const BASE: &str = "\
channel.snr_d_db = 5
channel.bandwidth_hz = 20e6
channel.slot_duration_s = 125e-6
channel.payload_bits = 2816
feedback.snr_f_db = 0
queue.lambda0 = 200
policy.n = 12,14
policy.alphas = 0.2
policy.k = 1
policy.n_max = 16
problem.max_attempts = 2
problem.epsilon = 1
";

#[test]
fn analyze_is_deterministic() {
    let cfg = write_config("analyze.cfg", BASE);
    let run = || {
        let out = bin().args(["analyze", "--config"]).arg(&cfg).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        stdout(&out)
    };
    let first = run();
    assert_eq!(first, run());
    assert!(first.contains("avg_delay"));
}

const ANALYZE_HEADER: &str = "p_fail,p_occur,p_out,t_service_mean_s,t_service_2nd_s2,\
t_queue_s,t_ub_mean_s,expected_rtt,avg_delay_s,utilization,stable";

fn analyze_csv_field(text: &str, name: &str) -> f64 {
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let idx = header.split(',').position(|c| c == name).unwrap();
    lines.next().unwrap().split(',').nth(idx).unwrap().parse().unwrap()
}

#[test]
fn analyze_csv_has_fixed_schema() {
    let cfg = write_config("analyze_csv.cfg", BASE);
    let out = bin()
        .args(["analyze", "--format", "csv", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), ANALYZE_HEADER);
    let row = lines.next().unwrap();
    assert_eq!(row.split(',').count(), 11, "bad row {row:?}");
    assert!(lines.next().is_none());
}

#[test]
fn optimize_policy_round_trips_through_analyze() {
    let cfg = write_config("optimize.cfg", BASE);
    let policy = tmp("optimize.policy");
    let out = bin()
        .args(["optimize", "--set", "policy.n_max=8", "--policy-out"])
        .arg(&policy)
        .args(["--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let objective: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("objective_s"))
        .unwrap()
        .trim()
        .trim_start_matches('=')
        .trim()
        .parse()
        .unwrap();

    let policy_text = fs::read_to_string(&policy).unwrap();
    assert!(policy_text.contains("policy.n"));
    let recorded: f64 = policy_text
        .lines()
        .find_map(|l| l.strip_prefix("result.objective = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((objective - recorded).abs() <= 1e-9 * recorded.abs());

    let out = bin()
        .args(["analyze", "--format", "csv", "--config"])
        .arg(&cfg)
        .args(["--set", "policy.n_max=8", "--policy"])
        .arg(&policy)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let analyzed = analyze_csv_field(&stdout(&out), "avg_delay_s");
    assert!(
        (analyzed - recorded).abs() <= 1e-12 + 1e-9 * recorded.abs(),
        "analyze gave {analyzed}, optimize recorded {recorded}"
    );
}

#[test]
fn validation_error_exits_with_1() {
    let cfg = write_config("invalid.cfg", "queue.lambda0 = -5\n");
    let out = bin().args(["analyze", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_key_exits_with_1() {
    let cfg = write_config("unknown.cfg", "channel.snr = 5\n");
    let out = bin().args(["analyze", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unstable_queue_exits_with_2() {
    let cfg = write_config("unstable.cfg", BASE);
    let out = bin()
        .args(["analyze", "--set", "queue.lambda0=1e9", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_matches_analytics_on_small_run() {
    let cfg = write_config("simulate.cfg", BASE);
    let out = bin()
        .args([
            "simulate",
            "--seed",
            "42",
            "--set",
            "queue.lambda0=2000",
            "--set",
            "sim.num_packets=200000",
            "--set",
            "sim.warmup_packets=5000",
            "--format",
            "csv",
            "--config",
        ])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "quantity,analytic,empirical,ci95,check");
    let mut checked = 0;
    for line in lines {
        assert_eq!(line.split(',').count(), 5, "bad row {line:?}");
        let name = line.split(',').next().unwrap();
        // the probability chain, the service law and the queue law are exact
        // for this config; the rtt-based delay rows use an upper bound and
        // are covered by the acceptance suite instead
        if name.starts_with("p_") || name.starts_with("t_service") || name == "t_queue_s" {
            assert!(line.ends_with(",pass"), "comparison failed: {line:?}");
            checked += 1;
        }
    }
    assert!(checked >= 6, "only {checked} comparison rows");
}

#[test]
fn sweep_emits_one_row_per_point_and_scheme() {
    let mut body = String::from(BASE);
    body.push_str("problem.max_attempts = 2\npolicy.n_max = 8\nsweep.var = snr_f\nsweep.values = -2,0,2\n");
    let cfg = write_config("sweep.cfg", &body);
    let out = bin().args(["sweep", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sweep_var,sweep_value,scheme,feasible,objective_s,p_out,n,alphas"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 9);
    for scheme in ["afd", "sfd", "perfect"] {
        assert_eq!(rows.iter().filter(|r| r.split(',').nth(2) == Some(scheme)).count(), 3);
    }
}
