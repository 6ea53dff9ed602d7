use std::fs;
use std::process::{Command, Output};

fn sos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sos")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .to_string()
}

#[test]
fn enumerate_single_site_is_trivial() {
    let o = sos(&["enumerate", "--L", "0", "--beta", "1", "--window", "0", "--format", "text"]);
    assert!(o.status.success());
    assert_eq!(field(&stdout(&o), "log_z").parse::<f64>().unwrap(), 0.0);
}

#[test]
fn enumerate_matches_between_methods() {
    let t = sos(&["enumerate", "--L", "1", "--beta", "1", "--window", "2", "--format", "text"]);
    let b = sos(&["enumerate", "--L", "1", "--beta", "1", "--window", "2", "--format", "text", "--method", "brute"]);
    let x: f64 = field(&stdout(&t), "log_z").parse().unwrap();
    let y: f64 = field(&stdout(&b), "log_z").parse().unwrap();
    assert!((x - y).abs() < 1e-10);
    assert_eq!(field(&stdout(&b), "method"), "brute");
}

#[test]
fn malformed_staircase_is_a_precondition_error() {
    let o = sos(&["enumerate", "--L", "1", "--a", "1,0", "--b", "0,0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid staircase"));
}

#[test]
fn guard_exit_code() {
    let o = sos(&["enumerate", "--L", "3", "--window", "4", "--method", "brute"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error[guard]"));
}

#[test]
fn bad_flag_is_a_usage_error() {
    assert_eq!(sos(&["tau0", "--nope"]).status.code(), Some(2));
    assert_eq!(sos(&["sample", "--bc", "sideways"]).status.code(), Some(2));
}

#[test]
fn verify_fkg_reports_no_violations() {
    let o = sos(&["verify-fkg", "--L-box", "2", "--beta", "1", "--window", "2"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("violations: 0"));
}

#[test]
fn contours_of_a_spike() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("spike.txt");
    fs::write(&p, "3 3 0\n0 0 0\n0 1 0\n0 0 0\n").unwrap();
    let o = sos(&["contours", "--input", p.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let lines = v["result"]["1"].as_array().unwrap();
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["length"], 4);
    assert_eq!(v["result"].as_object().unwrap().len(), 1);
}

#[test]
fn scaling_is_byte_identical_across_runs() {
    let args = [
        "scaling", "--beta", "1", "--L", "4,8", "--seed", "7", "--sweeps", "50", "--burnin", "10", "--tau-sweeps", "400",
        "--marginal-sweeps", "100",
    ];
    let a = sos(&args);
    let b = sos(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.contains("L,beta,log_p,se,rate,tau_hat,se_tau,H_L,fkg_lower_bound"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn output_header_round_trips_through_config() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.csv");
    let second = dir.path().join("b.csv");
    let o = sos(&["sample", "--L", "2", "--sweeps", "60", "--burnin", "10", "--every", "5", "--seed", "3", "--floor", "0",
        "--out", first.to_str().unwrap()]);
    assert!(o.status.success());
    let o = sos(&["sample", "--config", first.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
}

#[test]
fn json_output_round_trips_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("t.json");
    let o = sos(&["tau0", "--L", "1", "--beta", "2", "--out", first.to_str().unwrap()]);
    assert!(o.status.success());
    let again = sos(&["tau0", "--config", first.to_str().unwrap()]);
    assert_eq!(fs::read(&first).unwrap(), again.stdout);
    let changed = sos(&["tau0", "--config", first.to_str().unwrap(), "--beta", "3"]);
    let v: serde_json::Value = serde_json::from_slice(&changed.stdout).unwrap();
    assert_eq!(v["config"]["beta"], "3.0");
    assert_eq!(v["result"]["beta"], 3.0);
}

#[test]
fn config_for_another_command_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.cfg");
    fs::write(&p, "command=tau0\nL=1\n").unwrap();
    let o = sos(&["enumerate", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn positivity_exact_and_mc_agree() {
    let e = sos(&["positivity", "--L", "1", "--method", "exact", "--format", "text"]);
    let m = sos(&["positivity", "--L", "1", "--sweeps", "4000", "--format", "text", "--seed", "11"]);
    assert!(e.status.success() && m.status.success());
    let x: f64 = field(&stdout(&e), "log_p").parse().unwrap();
    let y: f64 = field(&stdout(&m), "log_p").parse().unwrap();
    let se: f64 = field(&stdout(&m), "std_error").parse().unwrap();
    assert!((x - y).abs() <= 3.0 * se, "{x} vs {y} ± {se}");
}

#[test]
fn monotonicity_and_potentials_emit_tables() {
    let o = sos(&["monotonicity", "--beta", "2"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().filter(|l| !l.starts_with('#')).count(), 4);
    let o = sos(&["potentials", "--max-sites", "3", "--window", "2"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("shape_id,size,d_proxy,phi,beta,window"));
}
