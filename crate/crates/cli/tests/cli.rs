use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mmo_core::io::{read_map_sample_csv, read_return_log_csv, FitJson, SignatureReport};

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmo-decomp"))
        .arg("--quiet")
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(&["maps-compute", "--lambda", "-3"], d)), 2);
    assert_eq!(code(&run(&["maps-fit", "--lambda", "-7"], d)), 2);
    assert_eq!(code(&run(&["hybrid-run", "--lambda", "-7"], d)), 2);
    let unknown = write_config(d, "unknown.json", r#"{"schema_version": 1, "bogus": 3}"#);
    assert_eq!(code(&run(&["hybrid-run", "--config", &unknown], d)), 2);
    let bad_eps = write_config(d, "eps.json", r#"{"params": {"eps1": -0.1, "eps2": 1, "k": -10, "lambda": -7, "mu": 0}}"#);
    assert_eq!(code(&run(&["koper-sim", "--config", &bad_eps], d)), 2);
    let zero = write_config(d, "zero.json", r#"{"n_returns": 0}"#);
    assert_eq!(code(&run(&["hybrid-run", "--config", &zero], d)), 2);
    let missing = d.join("nope.json");
    assert_eq!(code(&run(&["mmo-analyze", "--config", missing.to_str().unwrap()], d)), 2);
}

#[test]
fn bracket_without_sign_change_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.json", r#"{"bracket": [-7.5, -7.2], "lambdas": [-7.0]}"#);
    assert_eq!(code(&run(&["mmo-analyze", "--config", &cfg], dir.path())), 3);
}

#[test]
fn outputs_are_deterministic_without_timestamp() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [a.path(), b.path()] {
        assert!(run(&["--no-timestamp", "maps-compute", "--lambda", "-7"], d).status.success());
        assert!(run(&["--no-timestamp", "hybrid-run"], d).status.success());
    }
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 6);
    for n in names {
        assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn timestamp_is_a_comment_line() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(&["maps-compute", "--lambda", "-7"], dir.path()).status.success());
    let text = fs::read_to_string(dir.path().join("m_j_lambda_-7.csv")).unwrap();
    assert!(text.starts_with("# generated unix_time="));
    let s = read_map_sample_csv(text.as_bytes()).unwrap();
    assert_eq!(s.lambda, -7.0);
}

#[test]
fn compute_then_fit_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(run(&["maps-compute", "--lambda", "-7"], d).status.success());
    for m in ["m_j", "m_a_plus", "m_f", "m_b"] {
        assert!(d.join(format!("{m}_lambda_-7.csv")).exists(), "{m}");
    }
    let cfg = write_config(d, "fit.json", &format!(r#"{{"input_dir": {:?}}}"#, d.to_str().unwrap()));
    assert!(run(&["maps-fit", "--config", &cfg], d).status.success());

    let fit: FitJson = serde_json::from_str(&fs::read_to_string(d.join("fit_m_b_lambda_-7.json")).unwrap()).unwrap();
    assert_eq!(fit.pieces.len(), 2);
    assert!(fit.errors.linf < 5e-2);
    let map = fit.to_map().unwrap();
    assert!(map.continuity_residual.abs() < 1e-12);

    let errors = fs::read_to_string(d.join("fit_errors.csv")).unwrap();
    assert_eq!(errors.lines().filter(|l| !l.starts_with('#')).count(), 5);
}

#[test]
fn hybrid_run_round_trips_its_log() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, "h.json", r#"{"global": {"m2": 0, "m1": 0.1, "m0": -0.005}, "n_returns": 60}"#);
    assert!(run(&["--no-timestamp", "hybrid-run", "--config", &cfg], d).status.success());
    let log = read_return_log_csv(std::io::BufReader::new(fs::File::open(d.join("return_log.csv")).unwrap())).unwrap();
    assert_eq!(log.len(), 60);
    let sig: SignatureReport = serde_json::from_str(&fs::read_to_string(d.join("signature.json")).unwrap()).unwrap();
    assert_eq!(sig.signature.as_deref(), Some("1^4"));
}

#[test]
fn koper_sim_reports_the_known_pattern() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(run(&["--no-timestamp", "koper-sim"], d).status.success());
    let sig: SignatureReport = serde_json::from_str(&fs::read_to_string(d.join("koper_signature.json")).unwrap()).unwrap();
    assert_eq!(sig.signature.as_deref(), Some("1^1 1^2"));
    let header = fs::read_to_string(d.join("koper_trajectory.csv")).unwrap();
    assert!(header.starts_with("t,x,y,z\n"));
}
