use std::process::{Command, Output};

use serde_json::Value;

fn fingerlab(args: &[&str], corpus_env: Option<&std::path::Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fingerlab"));
    cmd.args(args).env_remove("FINGERLAB_CORPUS").env("RUST_LOG", "warn");
    if let Some(dir) = corpus_env {
        cmd.env("FINGERLAB_CORPUS", dir);
    }
    cmd.output().unwrap()
}

fn record(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn jobs_run_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().to_str().unwrap();
    let out = fingerlab(
        &["synth", "--corpus-dir", corpus, "--params", r#"{"count": 2, "config": {"num_notes": 20}}"#],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(record(&out)["state"], "succeeded");
    assert!(dir.path().join("notes/piece-001.json").exists());

    let out = fingerlab(&["annotate", "--corpus-dir", corpus], None);
    assert!(out.status.success());
    assert!(dir.path().join("rule/piece-000.json").exists());
    assert!(dir.path().join("edited/piece-000.json").exists());

    // Nothing is reviewed yet.
    let out = fingerlab(&["train", "--corpus-dir", corpus], None);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(record(&out)["state"], "failed");
}

#[test]
fn environment_overrides_the_default_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params.json");
    std::fs::write(&params, r#"{"count": 1, "config": {"num_notes": 5}}"#).unwrap();
    let out = fingerlab(&["synth", "--params-file", params.to_str().unwrap()], Some(dir.path()));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("poses/piece-000.json").exists());
}

#[test]
fn bad_parameters_exit_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fingerlab(&["synth", "--corpus-dir", dir.path().to_str().unwrap(), "--params", "not json"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("JSON"));
}
