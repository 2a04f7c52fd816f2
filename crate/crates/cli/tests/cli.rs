// Licensed under the Apache-2.0 license

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn attestsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attestsim")).current_dir(root()).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn matrix_reproduces_the_reference_table() {
    let o = attestsim(&["matrix"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("deviation"));
}

#[test]
fn run_reports_the_trail() {
    let o = attestsim(&["run", "scenarios/matrix/toctou__rata.toml"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("LmtMismatch"), "{}", stdout(&o));
}

#[test]
fn run_over_tcp() {
    let o = attestsim(&["--transport", "tcp", "run", "scenarios/extra/benign_pump__vrased.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn bench_writes_evidence() {
    let dir = std::env::temp_dir().join(format!("attestsim-cli-ev-{}", std::process::id()));
    let o = attestsim(&["--evidence", dir.to_str().unwrap(), "bench", "--sizes", "1,2,4,8"]);
    assert_eq!(o.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("bench_rata.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 4);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn asm_and_instrument() {
    let dir = std::env::temp_dir().join(format!("attestsim-cli-asm-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out = dir.join("pump.bin");
    let o = attestsim(&["asm", "crates/core/programs/pump.s", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(std::fs::metadata(&out).unwrap().len() > 0);
    let o = attestsim(&["instrument", "--dfa", "crates/core/programs/pump.s"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("__abort"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn report_prints_every_demo() {
    let o = attestsim(&["report", "--inputs", "20"]);
    assert_eq!(o.status.code(), Some(0));
    for name in ["pump", "threshold", "ranging"] {
        assert!(stdout(&o).contains(name));
    }
}

#[test]
fn missing_input_is_an_error() {
    assert_eq!(attestsim(&["run", "no/such/file.toml"]).status.code(), Some(2));
}
