use std::fs;
use std::process::{Command, Output};

fn msgfem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msgfem")).args(args).env_remove("MSGFEM_WORKERS").output().unwrap()
}

const SMALL: &[&str] = &["--set", "n=32", "--set", "N=2", "--set", "ell=2", "--set", "s=0.0625", "--workers", "1"];

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn run(args: &[String]) -> Output {
    msgfem(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn config_prints_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let out = msgfem(&["config", "--set", "eps=1e-2,1e-3", "--set", "seed=7"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let path = dir.path().join("run.config");
    fs::write(&path, &text).unwrap();
    let again = msgfem(&["config", "--config", path.to_str().unwrap()]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn bad_configuration_exits_with_2() {
    assert_eq!(msgfem(&["config", "--set", "n=250"]).status.code(), Some(2));
    assert_eq!(msgfem(&["config", "--set", "nonsense"]).status.code(), Some(2));
    assert_eq!(msgfem(&["config", "--config", "/nonexistent.cfg"]).status.code(), Some(2));
}

#[test]
fn sweep_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let args = with(SMALL, &["--set", "nloc=0,1,2,3", "--out", out_dir, "sweep-nloc"]);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep_nloc.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(dir.path().join("sweep_nloc.log").exists());
    assert!(dir.path().join("sweep_nloc.config").exists());
    assert!(fs::read_dir(dir.path().join("plot")).unwrap().count() >= 2);
}

#[test]
fn solve_can_dump_the_partition() {
    let dir = tempfile::tempdir().unwrap();
    let args = with(SMALL, &["--out", dir.path().to_str().unwrap(), "solve", "--dump-pu"]);
    assert!(run(&args).status.success());
    assert!(fs::read_to_string(dir.path().join("pu.csv")).unwrap().lines().count() > 1);
    assert_eq!(fs::read_to_string(dir.path().join("solve.csv")).unwrap().lines().count(), 2);
}

#[test]
fn validate_passes_on_default_suite() {
    let dir = tempfile::tempdir().unwrap();
    let out = msgfem(&["--out", dir.path().to_str().unwrap(), "validate"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn coefficient_generation_writes_raster() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.bin");
    let out = msgfem(&["--set", "s=0.125", "gen-coef", "--output", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(fs::metadata(&path).unwrap().len() > 64);
}
