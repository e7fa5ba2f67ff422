//! End-to-end runs of the command-line tool.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixtures;

fn statefuzz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_statefuzz"))
        .args(args)
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_target_is_a_config_error() {
    let seeds = fixtures().join("toy-ftp/seeds.apfz");
    let out = tempfile::tempdir().unwrap();
    let o = statefuzz(&[
        "fuzz",
        "--target",
        "nope",
        "--corpus",
        path(&seeds),
        "--out",
        path(out.path()),
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn bad_epsilon_and_missing_args_exit_2() {
    let seeds = fixtures().join("toy-ftp/seeds.apfz");
    let out = tempfile::tempdir().unwrap();
    let o = statefuzz(&[
        "fuzz",
        "--target",
        "toy-ftp",
        "--corpus",
        path(&seeds),
        "--epsilon",
        "1.5",
        "--out",
        path(out.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(statefuzz(&["fuzz"]).status.code(), Some(2));
    let o = statefuzz(&[
        "replay",
        "--target",
        "toy-ftp",
        "--input",
        "/nonexistent/corpus.apfz",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_grammar_prints_accuracy() {
    let dns = fixtures().join("dns");
    let o = statefuzz(&[
        "eval-grammar",
        "--hypothesis",
        path(&dns.join("hypothesis.json")),
        "--truth",
        path(&dns.join("truth.json")),
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["report"]["g_l"], 54);
    assert!((v["exact_acc"].as_f64().unwrap() - 54.0 / 81.0).abs() < 1e-9);
}

#[test]
fn fuzz_writes_outputs_and_crash_replays() {
    let seeds = fixtures().join("toy-ftp/seeds.apfz");
    let out = tempfile::tempdir().unwrap();
    let o = statefuzz(&[
        "fuzz",
        "--target",
        "toy-ftp",
        "--corpus",
        path(&seeds),
        "--state-vars",
        "session_state",
        "--execs",
        "20000",
        "--out",
        path(out.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "queue.apfz",
        "stats.csv",
        "state_model.dot",
        "state_model.json",
        "crashes.json",
    ] {
        assert!(out.path().join(f).exists(), "missing {f}");
    }
    let crash = out.path().join("crashes/retr_overflow.apfz");
    assert!(crash.exists());
    let o = statefuzz(&[
        "replay",
        "--target",
        "toy-ftp",
        "--input",
        path(&crash),
        "--state-vars",
        "session_state",
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("retr_overflow"));
}

#[test]
fn analyze_then_export() {
    let seeds = fixtures().join("toy-ftp/seeds.apfz");
    let dir = tempfile::tempdir().unwrap();
    let vars = dir.path().join("vars.json");
    let o = statefuzz(&[
        "analyze-vars",
        "--target",
        "toy-ftp",
        "--corpus",
        path(&seeds),
        "--out",
        path(&vars),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&vars).unwrap()).unwrap();
    assert_eq!(report["selected"], serde_json::json!(["session_state"]));

    let dot = dir.path().join("model.dot");
    let o = statefuzz(&[
        "export-state-model",
        "--target",
        "toy-ftp",
        "--corpus",
        path(&seeds),
        "--vars",
        path(&vars),
        "--out",
        path(&dot),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(&dot)
        .unwrap()
        .starts_with("digraph"));
}

#[test]
fn learn_grammar_offline_matches_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grammar.json");
    let o = statefuzz(&[
        "learn-grammar",
        "--protocol",
        "toy-tlv",
        "--corpus",
        path(&fixtures().join("toy-tlv/seeds.apfz")),
        "--offline",
        path(&fixtures().join("toy-tlv/llm")),
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read_to_string(out).unwrap(),
        std::fs::read_to_string(fixtures().join("toy-tlv/grammar.json")).unwrap()
    );
}
