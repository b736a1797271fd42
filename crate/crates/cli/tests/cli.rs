use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("linchain-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn linchain(out: &Path, args: &[&str]) -> (Output, Value) {
    let output = Command::new(env!("CARGO_BIN_EXE_linchain"))
        .env("LINCHAIN_OUT", out)
        .args(args)
        .output()
        .unwrap();
    let stdout = String::from_utf8(output.stdout.clone()).unwrap();
    let doc = if stdout.is_empty() {
        Value::Null
    } else {
        assert!(stdout.ends_with('\n'));
        serde_json::from_str(&stdout).unwrap()
    };
    (output, doc)
}

fn scenario(name: &str) -> String {
    repo().join("scenarios").join(name).to_string_lossy().into_owned()
}

#[test]
fn simulate_replay_and_check() {
    let out = scratch("simulate");
    let (o, doc) = linchain(&out, &["simulate", "--protocol", "abd", "--n", "3", "--f", "1", "--seed", "4", "--horizon", "150"]);
    assert!(o.status.success());
    assert_eq!(doc["schema"], "linchain-report/1");
    assert_eq!(doc["command"], "simulate");
    let trace = doc["results"]["trace"].as_str().unwrap().to_string();
    assert!(out.join("simulate.report.json").exists());

    let (o, doc) = linchain(&out, &["replay", &trace]);
    assert!(o.status.success());
    assert_eq!(doc["results"]["reproduced"], true);

    let (o, doc) = linchain(&out, &["check-lin", &trace, "--expect", "linearizable"]);
    assert!(o.status.success());
    assert_eq!(doc["results"]["result"]["verdict"], "linearizable");
    let (o, _) = linchain(&out, &["check-lin", &trace, "--expect", "violation"]);
    assert_eq!(o.status.code(), Some(1));

    let (o, doc) = linchain(&out, &["analyze", &trace]);
    assert!(o.status.success());
    assert!(doc["results"]["operations"].as_array().is_some());
}

#[test]
fn transform_and_reorder() {
    let out = scratch("transform");
    let (_, doc) = linchain(&out, &["simulate", "--protocol", "gossip", "--n", "3", "--f", "0", "--seed", "1", "--horizon", "30"]);
    let trace = doc["results"]["trace"].as_str().unwrap().to_string();
    let (o, doc) = linchain(&out, &["transform", &trace, "--pivot", "1:12", "--delta", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(doc["results"]["certificate"]["locally_equivalent"], true);
    assert_eq!(doc["results"]["certificate"]["result_horizon"], 34);
    let delayed = doc["results"]["trace"].as_str().unwrap();
    let (o, _) = linchain(&out, &["replay", delayed]);
    assert!(o.status.success());

    let (o, _) = linchain(&out, &["transform", &trace, "--pivot", "nonsense", "--delta", "4"]);
    assert_eq!(o.status.code(), Some(2));

    let (o, doc) = linchain(&out, &["reorder", &trace, "--x", "0.0", "--y", "9.9"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(doc, Value::Null);
}

#[test]
fn broken_audit_refutes() {
    let out = scratch("audit");
    let (_, doc) = linchain(&out, &["simulate", "--scenario", &scenario("broken-fixture.json"), "--seed", "0"]);
    let trace = doc["results"]["trace"].as_str().unwrap().to_string();
    let (o, doc) = linchain(&out, &["audit", &trace, "--f", "1", "--refute", "--expect", "violation"]);
    assert!(o.status.success());
    assert!(doc["results"]["refuted"].as_u64().unwrap() > 0);
    let refuted = doc["results"]["refutations"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["refuted"] == true)
        .unwrap();
    let evidence = refuted["trace"].as_str().unwrap();
    let (o, doc) = linchain(&out, &["check-lin", evidence, "--expect", "violation"]);
    assert!(o.status.success());
    assert_eq!(doc["results"]["result"]["verdict"], "not_linearizable");
    let (o, _) = linchain(&out, &["audit", &trace, "--expect", "linearizable"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn abd_acceptance_scenario_exits_zero() {
    let out = scratch("abd");
    let (o, doc) = linchain(&out, &["run-scenario", &scenario("abd-acceptance.json")]);
    assert!(o.status.success());
    assert_eq!(doc["results"]["summary"]["linearizable"], 1000);
    assert_eq!(doc["results"]["summary"]["audit_clean"], 1000);
    assert!(out.join("run-scenario.report.json").exists());
}

#[test]
fn broken_scenario_with_refute_emits_evidence() {
    let out = scratch("broken");
    let (o, doc) = linchain(&out, &["run-scenario", &scenario("broken-fixture.json"), "--seeds", "0..10", "--refute"]);
    assert!(o.status.success());
    assert!(doc["results"]["summary"]["refuted"].as_u64().unwrap() > 0);
    let evidence: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".refuted.trace.json"))
        .collect();
    assert!(!evidence.is_empty());
    let (o, _) = linchain(&out, &["run-scenario", &scenario("broken-fixture.json"), "--seeds", "0..10", "--expect", "linearizable"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn scenario_with_too_many_crashes_is_rejected() {
    let out = scratch("constraint");
    let text = std::fs::read_to_string(scenario("abd-acceptance.json"))
        .unwrap()
        .replace(r#""count": 2"#, r#""count": 3"#);
    let path = out.join("bad.json");
    std::fs::write(&path, text).unwrap();
    let (o, _) = linchain(&out, &["run-scenario", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scenario constraint"));
}

#[test]
fn fuzz_commands() {
    let out = scratch("fuzz");
    let (o, doc) = linchain(&out, &["fuzz", &scenario("abd-acceptance.json"), "--seeds", "0..1"]);
    assert!(o.status.success());
    assert_eq!(doc["results"]["seeds"], 1);
    let (o, doc) = linchain(&out, &["fuzz", &scenario("broken-fixture.json"), "--seeds", "0..20"]);
    assert!(o.status.success());
    let failures = doc["results"]["failures"].as_array().unwrap();
    assert!(!failures.is_empty());
    let min = failures.iter().find_map(|f| f["shrunk"]["trace"].as_str()).unwrap();
    let (o, _) = linchain(&out, &["check-lin", min, "--expect", "violation"]);
    assert!(o.status.success());
}
