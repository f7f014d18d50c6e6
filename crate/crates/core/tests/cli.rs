mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::data;
use serde_json::Value;

fn lsras(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsras"))
        .args(args)
        .output()
        .unwrap()
}

fn path(name: &str) -> String {
    data(name).to_string_lossy().into_owned()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const PLAN: [&str; 6] = ["--alpha", "0.1", "--delta", "0.9", "--sigma", "0.9"];

fn with_plan<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().copied().chain(PLAN).collect()
}

#[test]
fn bounds_reports_plan() {
    let (net, ev) = (path("ab.json"), path("ab_evidence.json"));
    let out = lsras(&with_plan(&[
        "bounds",
        "--network",
        &net,
        "--evidence",
        &ev,
    ]));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = stdout_json(&out);
    let r = &v["result"];
    assert_eq!(r["N"], 250);
    assert_eq!(r["p_lower"], 0.3);
    assert_eq!(r["p_upper"], 0.8);
    assert!(r["g_lower"].as_u64().unwrap() <= r["g_upper"].as_u64().unwrap());
    assert_eq!(v["config"]["alpha"], 0.1);
    assert_eq!(v["config"]["command"], "bounds");
}

#[test]
fn bounds_above_cap_is_exit_two_with_report() {
    let (net, ev) = (path("ab.json"), path("ab_evidence.json"));
    let out = lsras(&[
        "bounds",
        "--network",
        &net,
        "--evidence",
        &ev,
        "--alpha",
        "0.5",
        "--delta",
        "0.75",
        "--sigma",
        "0.999",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cannot certify"));
    assert_eq!(stdout_json(&out)["result"]["feasible"], false);
}

#[test]
fn impossible_evidence_cannot_be_certified() {
    let (net, ev) = (path("ab_impossible.json"), path("ab_evidence.json"));
    let out = lsras(&with_plan(&[
        "bounds",
        "--network",
        &net,
        "--evidence",
        &ev,
    ]));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cannot certify"));

    let out = lsras(&with_plan(&[
        "sample",
        "--network",
        &net,
        "--evidence",
        &ev,
    ]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_successes_is_exit_three() {
    let (net, ev) = (path("ab_impossible.json"), path("ab_evidence.json"));
    let out = lsras(&with_plan(&[
        "sample",
        "--network",
        &net,
        "--evidence",
        &ev,
        "--trials",
        "100",
    ]));
    assert_eq!(out.status.code(), Some(3));
    let r = &stdout_json(&out)["result"];
    assert_eq!(r["k_success"], 0);
    assert_eq!(r["estimates_defined"], false);
}

#[test]
fn bad_network_names_file_and_node() {
    let net = path("dangling.json");
    let out = lsras(&with_plan(&["bounds", "--network", &net]));
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(
        err.contains("dangling.json") && err.contains("Smoke") && err.contains("Fire"),
        "{err}"
    );
}

#[test]
fn usage_errors_are_exit_one() {
    assert_eq!(lsras(&["bounds"]).status.code(), Some(1));
    let net = path("ab.json");
    let out = lsras(&[
        "bounds",
        "--network",
        &net,
        "--alpha",
        "0",
        "--delta",
        "0.9",
        "--sigma",
        "0.9",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("alpha"));
}

#[test]
fn exact_cap_is_exit_four() {
    let net = path("wide25.json");
    let out = lsras(&["exact", "--network", &net]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("cap"));
    let ab = path("ab.json");
    assert_eq!(
        lsras(&["exact", "--network", &ab, "--state-cap", "3"])
            .status
            .code(),
        Some(4)
    );
    assert_eq!(
        lsras(&["exact", "--network", &ab, "--state-cap", "4"])
            .status
            .code(),
        Some(0)
    );
}

#[test]
fn exact_posterior() {
    let (net, ev) = (path("ab.json"), path("ab_evidence.json"));
    let out = lsras(&["exact", "--network", &net, "--evidence", &ev]);
    assert_eq!(out.status.code(), Some(0));
    let r = &stdout_json(&out)["result"];
    assert!((r["evidence_prob"].as_f64().unwrap() - 0.55).abs() < 1e-15);
    assert!((r["posteriors"]["A"]["t"].as_f64().unwrap() - 8.0 / 11.0).abs() < 1e-12);
}

#[test]
fn sample_defaults_to_planned_trials() {
    let (net, ev) = (path("ab.json"), path("ab_evidence.json"));
    let out = lsras(&with_plan(&[
        "sample",
        "--network",
        &net,
        "--evidence",
        &ev,
        "--seed",
        "3",
    ]));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = stdout_json(&out);
    let r = &v["result"];
    assert_eq!(r["n_total"], r["planned_trials"]);
    assert_eq!(v["config"]["trials"], r["planned_trials"]);
    assert_eq!(r["guarantee_met_a_priori"], true);
    assert_eq!(r["metadata"]["seed"], 3);
    assert!(v["note"]
        .as_str()
        .unwrap()
        .contains("successes_exceed_required"));
    let p = r["estimates"]["A"]["t"].as_f64().unwrap();
    assert!((p - 8.0 / 11.0).abs() < 0.1);
}

#[test]
fn adaptive_modes_run() {
    let (net, ev) = (path("ab.json"), path("ab_evidence.json"));
    for mode in ["conservative", "empirical"] {
        let out = lsras(&with_plan(&[
            "sample",
            "--network",
            &net,
            "--evidence",
            &ev,
            "--mode",
            mode,
        ]));
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        let v = stdout_json(&out);
        assert_eq!(v["result"]["heuristic"], mode == "empirical");
        assert_eq!(v["config"]["batch"], 64);
        assert!(!v["result"]["plan_history"].as_array().unwrap().is_empty());
    }
}

#[test]
fn replay_reproduces_output() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.json");
    let (net, ev) = (path("ab.json"), path("ab_evidence.json"));
    let f = first.to_string_lossy();
    let out = lsras(&with_plan(&[
        "sample",
        "--network",
        &net,
        "--evidence",
        &ev,
        "--seed",
        "11",
        "--out",
        &f,
    ]));
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());

    let before = std::fs::read(&first).unwrap();
    let saved = dir.path().join("saved.json");
    std::fs::rename(&first, &saved).unwrap();

    // the embedded config carries --out, so replay rewrites the same file
    let replay = lsras(&["replay", &saved.to_string_lossy()]);
    assert_eq!(replay.status.code(), Some(0), "{}", stderr(&replay));
    assert_eq!(std::fs::read(&first).unwrap(), before);
}

#[test]
fn sweep_writes_csv_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("grid.csv");
    let c = csv.to_string_lossy();
    let out = lsras(&[
        "sweep",
        "--sigmas",
        "0.5,0.9",
        "--n-values",
        "50,500",
        "--p-points",
        "5",
        "--p-min",
        "0.01",
        "--out",
        &c,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("sigma,N,p,g_lower,g_upper,feasible"));
    assert_eq!(lines.count(), 2 * 2 * 5);
    let side = Path::new(&format!("{c}.config.json")).to_path_buf();
    let cfg: Value = serde_json::from_str(&std::fs::read_to_string(&side).unwrap()).unwrap();
    assert_eq!(cfg["sweep"]["p_points"], 5);

    let again = lsras(&["replay", &side.to_string_lossy()]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), text);
}

#[test]
fn verify_reports_coverage() {
    let (net, ev) = (path("ab.json"), path("ab_evidence.json"));
    let out = lsras(&[
        "verify",
        "--network",
        &net,
        "--evidence",
        &ev,
        "--alpha",
        "0.2",
        "--delta",
        "0.75",
        "--sigma",
        "0.9",
        "--replications",
        "50",
        "--seed",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = &stdout_json(&out)["result"];
    assert_eq!(r["replications"], 50);
    assert_eq!(r["pass"], true);
}

#[test]
fn threads_do_not_change_output() {
    let (net, ev) = (path("ab.json"), path("ab_evidence.json"));
    let base = with_plan(&[
        "sample",
        "--network",
        &net,
        "--evidence",
        &ev,
        "--seed",
        "8",
        "--trials",
        "20000",
    ]);
    let one: Vec<&str> = ["--threads", "1"]
        .into_iter()
        .chain(base.iter().copied())
        .collect();
    let four: Vec<&str> = ["--threads", "4"]
        .into_iter()
        .chain(base.iter().copied())
        .collect();
    assert_eq!(lsras(&one).stdout, lsras(&four).stdout);
}
