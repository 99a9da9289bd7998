use std::io::Write;
use std::process::{Command, Output, Stdio};

fn harqlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harqlab")).args(args).output().expect("spawn harqlab")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn gl_nodes_single_point_rule() {
    let out = harqlab(&["gl-nodes", "--n", "1"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "i,node,weight\n1,1,1\n");
}

#[test]
fn complexity_counts() {
    let out = harqlab(&["complexity", "--m", "5", "--n", "20"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(column(&text, "naive"), ["16000000"]);
    assert_eq!(column(&text, "dp"), ["53129"]);
}

#[test]
fn asymptotic_single_round_value() {
    let out = harqlab(&["bler", "--method", "asy", "--snr-db", "40", "--m", "1", "--no-timing"]);
    assert!(out.status.success());
    let v: f64 = column(&stdout(&out), "bler")[0].parse().unwrap();
    assert!((v - 0.003116781499459332).abs() < 1e-15, "{v}");
}

#[test]
fn gl_dp_reports_evaluation_count() {
    let out = harqlab(&["bler", "--method", "gl-dp", "--snr-db", "10", "--m", "3", "--n", "20"]);
    assert!(out.status.success());
    assert_eq!(column(&stdout(&out), "q_evals"), ["1770"]);
}

#[test]
fn no_timing_output_is_reproducible() {
    let args = ["bler", "--method", "mc-approx", "--snr-db", "5,10", "--m", "2", "--samples", "20000", "--seed", "3", "--no-timing"];
    let a = harqlab(&args);
    let b = harqlab(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(column(&stdout(&a), "wall_ms").iter().all(|w| w == "0.0"));
}

#[test]
fn output_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.csv");
    let args = ["bler", "--method", "trap", "--snr-db", "15", "--m", "2", "--k", "400", "--no-timing"];
    let direct = harqlab(&args);
    let mut with_file = args.to_vec();
    with_file.extend(["--output", path.to_str().unwrap()]);
    let filed = harqlab(&with_file);
    assert!(filed.status.success());
    assert!(filed.stdout.is_empty());
    assert_eq!(std::fs::read(&path).unwrap(), direct.stdout);
}

#[test]
fn sweep_emits_every_round() {
    let out = harqlab(&[
        "sweep", "--figure", "bler-vs-snr", "--methods", "gl-dp,asy", "--snr-db", "10", "--m", "3", "--no-timing",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(column(&text, "m"), ["1", "2", "3", "1", "2", "3"]);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(harqlab(&["bler", "--method", "trap", "--n", "5", "--snr-db", "10"]).status.code(), Some(2));
    assert_eq!(harqlab(&["bler", "--method", "asy", "--samples", "5", "--snr-db", "10"]).status.code(), Some(2));
    assert_eq!(harqlab(&["bler", "--method", "gl", "--snr-db", "10", "--l", "-1"]).status.code(), Some(2));
    assert_eq!(harqlab(&["gl-nodes", "--n", "0"]).status.code(), Some(2));
}

#[test]
fn infeasible_exits_3() {
    let out = harqlab(&["optimize", "gp", "--pbar-db", "10", "--bler-max", "1e-3"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(column(&stdout(&out), "status"), ["infeasible"]);
}

#[test]
fn partially_feasible_sweep_succeeds() {
    let out = harqlab(&["optimize", "gp", "--pbar-db", "10,20", "--bler-max", "1e-3"]);
    assert!(out.status.success());
    assert_eq!(column(&stdout(&out), "status"), ["infeasible", "ok"]);
}

#[test]
fn budget_exceeded_exits_4() {
    let out = harqlab(&["bler", "--method", "gl", "--m", "5", "--n", "40", "--snr-db", "10"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn simulate_prints_report() {
    let out = harqlab(&["simulate", "--policy", "15.8,15.8", "--slots", "5000", "--seed", "2"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["slot_count"], 5000);
    assert!(v["ltat"].as_f64().unwrap() > 0.0);
}

#[test]
fn env_server_session() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("env.json");
    std::fs::write(&cfg, r#"{"m": 2, "pbar": 30.0, "blermax": 0.01, "w": 50, "i": 10}"#).unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_harqlab"))
        .args(["env-server", "--config", cfg.to_str().unwrap()])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let script = [
        r#"{"type":"hello"}"#,
        r#"{"type":"step","power":1.0}"#,
        r#"{"type":"reset","seed":4}"#,
        r#"{"type":"step","power":20.0}"#,
        r#"{"type":"stats"}"#,
        r#"not json"#,
        r#"{"type":"shutdown"}"#,
    ];
    child.stdin.take().unwrap().write_all((script.join("\n") + "\n").as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let replies: Vec<serde_json::Value> =
        stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let kinds: Vec<&str> = replies.iter().map(|r| r["type"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["config", "error", "state", "transition", "stats", "error", "shutdown"]);
    assert_eq!(replies[0]["m"], 2);
    assert_eq!(replies[1]["code"], "not_initialized");
    assert_eq!(replies[5]["code"], "malformed");
    assert_eq!(replies[4]["window_slots"], 1);
}

#[test]
fn env_server_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("env.json");
    std::fs::write(&cfg, r#"{"pbar": 30.0, "blermax": 0.01, "bogus": 1}"#).unwrap();
    let out = harqlab(&["env-server", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
