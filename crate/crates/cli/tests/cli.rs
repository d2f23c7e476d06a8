use std::path::Path;
use std::process::{Command, Output};

fn stonf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stonf")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("terminated by signal")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn derive_toy(dir: &Path) -> std::path::PathBuf {
    let rep = dir.join("toy.report");
    let o = stonf(&["derive", "toy", "--order", "e4,s3", "--out", rep.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    rep
}

#[test]
fn derive_prints_the_toy_evolution() {
    let o = stonf(&["derive", "toy", "--order", "e4,s3"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("certified 4"), "{out}");
    let dx = out.lines().find(|l| l.starts_with("dX = ")).unwrap();
    assert_eq!(dx, "dX = -1 * s X * phi[0] +2 * s^2 X * phi[0]*Z[-1]{ phi[0] } -1 * X^3");
}

#[test]
fn saved_report_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let rep = derive_toy(dir.path());
    let o = stonf(&["verify", rep.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("residual order 4"));
}

#[test]
fn corrupted_report_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let rep = derive_toy(dir.path());
    let text = std::fs::read_to_string(&rep).unwrap();
    let bad = text.replacen("dX = -1 * s X * phi[0]", "dX = -2 * s X * phi[0]", 1);
    assert_ne!(bad, text);
    std::fs::write(&rep, bad).unwrap();
    assert_eq!(code(&stonf(&["verify", rep.to_str().unwrap()])), 4);
}

#[test]
fn malformed_spec_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.spec");
    std::fs::write(&spec, "name bad\nslow x\ndx = x*(y\n").unwrap();
    let o = stonf(&["derive", spec.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn garbled_report_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("junk.report");
    std::fs::write(&rep, "not a report\n").unwrap();
    assert_eq!(code(&stonf(&["verify", rep.to_str().unwrap()])), 3);
}

#[test]
fn bad_configuration_exits_one() {
    assert_eq!(code(&stonf(&["simulate", "toy", "--T", "0"])), 1);
    assert_eq!(code(&stonf(&["derive", "no-such-spec"])), 1);
    assert_eq!(code(&stonf(&["derive", "toy", "--mu-min=-1"])), 1);
}

#[test]
fn unknown_flags_are_usage_errors() {
    assert_eq!(code(&stonf(&["derive", "toy", "--bogus"])), 2);
}

#[test]
fn simulate_reports_requested_times() {
    let o = stonf(&[
        "simulate", "toy", "--model", "normal-form", "--order", "e4,s3", "--replicates", "50", "--T", "2", "--times", "1,2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.lines().count() >= 3, "{out}");
    assert!(out.lines().skip(1).all(|l| !l.contains("NaN")), "{out}");
}
