use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gowers-forms"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn read(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn checks_pass(report: &Value) -> bool {
    report["checks"].as_array().unwrap().iter().all(|c| c["verdict"] == true)
}

#[test]
fn trivial_generators_and_bias() {
    let t = TempDir::new().unwrap();
    let out = run(t.path(), &["gen", "zero", "--n", "3", "--k", "4"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["outputs"]["form"]["coeffs"], serde_json::json!([]));
    assert!(run(t.path(), &["gen", "dot", "--n", "5", "--out", "dot5"]).status.success());
    let b = json(&run(t.path(), &["bias", "--form", "dot5/form.json"]));
    assert_eq!((b["outputs"]["num"].as_i64(), b["outputs"]["log2_den"].as_u64()), (Some(1), Some(5)));
    assert!(checks_pass(&b));
}

#[test]
fn certificates_round_trip_and_tampering_is_caught() {
    let t = TempDir::new().unwrap();
    assert!(run(t.path(), &["gen", "random", "--n", "3", "--k", "3", "--seed", "7", "--out", "r"]).status.success());
    assert!(run(t.path(), &["certify", "--form", "r/form.json", "--out", "c"]).status.success());
    let ok = run(t.path(), &["verify", "--cert", "c/certificate.json", "--form", "r/form.json"]);
    assert!(ok.status.success());
    let mut cert = read(t.path().join("c/certificate.json"));
    let coeffs = cert["target"]["coeffs"].as_array_mut().unwrap();
    // Drop one monomial from the target so the expansion no longer matches.
    if coeffs.is_empty() {
        coeffs.push(serde_json::json!([0, 0, 0]));
    } else {
        coeffs.remove(0);
    }
    fs::write(t.path().join("bad.json"), serde_json::to_string(&cert).unwrap()).unwrap();
    let bad = run(t.path(), &["verify", "--cert", "bad.json"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(json(&bad)["outputs"]["first_mismatch"]["coefficient"].is_array());
}

#[test]
fn counterexample_has_two_term_certificate() {
    let t = TempDir::new().unwrap();
    let out = run(t.path(), &["gen", "counterexample", "--n", "4", "--out", "cx"]);
    assert!(out.status.success());
    let cert = read(t.path().join("cx/certificate.json"));
    assert_eq!(cert["terms"].as_array().unwrap().len(), 2);
    assert!(checks_pass(&read(t.path().join("cx/report.json"))));
}

#[test]
fn planted_pair_symmetrizes() {
    let t = TempDir::new().unwrap();
    assert!(run(t.path(), &["gen", "planted-pair", "--n", "3", "--k", "3", "--seed", "2", "--out", "p"]).status.success());
    let out = run(t.path(), &["symmetrize", "--driver", "pair", "--form", "p/form.json", "--cert", "p/certificate.json", "--out", "s"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(checks_pass(&read(t.path().join("s/report.json"))));
}

#[test]
fn integrate_and_gowers() {
    let t = TempDir::new().unwrap();
    assert!(run(t.path(), &["gen", "function-constructed", "--n", "3", "--k", "3", "--out", "c"]).status.success());
    let i = run(t.path(), &["integrate", "--form", "c/form.json"]);
    assert!(i.status.success());
    let g = json(&run(t.path(), &["gowers", "--function", "c/function.json", "--k", "4"]));
    assert!(checks_pass(&g));
    assert_eq!(g["outputs"]["norms"][0]["value"], 1.0);
}

#[test]
fn pipeline_demo_end_to_end() {
    let t = TempDir::new().unwrap();
    assert!(run(t.path(), &["gen", "function-constructed", "--n", "3", "--k", "4", "--out", "c"]).status.success());
    let args = ["pipeline", "--function", "c/function.json", "--form", "c/form.json", "--c", "0.9", "--out"];
    let first = run(t.path(), &[&args[..], &["p1"]].concat());
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let report = read(t.path().join("p1/report.json"));
    assert!(checks_pass(&report));
    assert!(report["outputs"]["final_correlation"].as_f64().unwrap() >= 0.9);
    assert!(t.path().join("p1/polynomial.json").exists());
    // Byte-identical on re-run, also with a single thread.
    let second = bin().current_dir(t.path()).env("GOWERS_FORMS_THREADS", "1").args([&args[..], &["p2"]].concat()).output().unwrap();
    assert!(second.status.success());
    for f in ["trace.json", "report.json", "polynomial.json"] {
        assert_eq!(fs::read(t.path().join("p1").join(f)).unwrap(), fs::read(t.path().join("p2").join(f)).unwrap(), "{f}");
    }
    let v = run(t.path(), &["report-verify", "--report", "p1/report.json"]);
    assert!(v.status.success());
    assert!(checks_pass(&json(&v)));
}

#[test]
fn report_verify_detects_tampering() {
    let t = TempDir::new().unwrap();
    assert!(run(t.path(), &["gen", "dot", "--n", "3", "--out", "d"]).status.success());
    assert!(run(t.path(), &["bias", "--form", "d/form.json", "--out", "b"]).status.success());
    let mut r = read(t.path().join("b/report.json"));
    r["checks"][0]["verdict"] = Value::Bool(false);
    fs::write(t.path().join("tampered.json"), serde_json::to_string(&r).unwrap()).unwrap();
    let v = run(t.path(), &["report-verify", "--report", "tampered.json"]);
    assert_eq!(v.status.code(), Some(1));
    // Changing an input after the fact is caught by its hash.
    fs::write(t.path().join("d/form.json"), r#"{"n":3,"k":2,"coeffs":[[0,0]]}"#).unwrap();
    let v = run(t.path(), &["report-verify", "--report", "b/report.json"]);
    assert_eq!(v.status.code(), Some(1));
    assert!(!json(&v)["outputs"]["mismatches"].as_array().unwrap().is_empty());
}

#[test]
fn noise_terminates_early() {
    let t = TempDir::new().unwrap();
    assert!(run(t.path(), &["gen", "function-noise", "--n", "4", "--seed", "3", "--out", "f"]).status.success());
    assert!(run(t.path(), &["gen", "random", "--n", "4", "--k", "4", "--seed", "3", "--out", "a"]).status.success());
    let out = run(t.path(), &["pipeline", "--function", "f/function.json", "--form", "a/form.json", "--floor", "0.5"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["outputs"]["status"]["status"], "terminated");
}

#[test]
fn exit_codes() {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("broken.json"), "{").unwrap();
    assert_eq!(run(t.path(), &["bias", "--form", "broken.json"]).status.code(), Some(2));
    assert_eq!(run(t.path(), &["bias", "--form", "missing.json"]).status.code(), Some(2));
    assert_eq!(run(t.path(), &["no-such-command"]).status.code(), Some(2));
    assert!(run(t.path(), &["gen", "function-constructed", "--n", "3", "--k", "4", "--out", "c"]).status.success());
    assert_eq!(run(t.path(), &["gowers", "--function", "c/function.json", "--k", "4", "--budget", "10"]).status.code(), Some(3));
    let failed = run(t.path(), &["pipeline", "--function", "c/function.json", "--form", "c/form.json", "--budget", "8"]);
    assert_eq!(failed.status.code(), Some(4));
    assert_eq!(json(&failed)["outputs"]["status"]["status"], "failed");
}
