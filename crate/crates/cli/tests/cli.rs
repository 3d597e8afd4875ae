use std::path::Path;
use std::process::{Command, Output};

fn cred(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cred"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = "experiment = \"effdim_diag\"\n[effdim]\ndim = 8\npool_size = 300\n";

#[test]
fn missing_config_names_the_path() {
    let out = cred(&["run", "/nonexistent/cfg.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/cfg.toml"));
}

#[test]
fn unknown_experiment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "experiment = \"nope\"\n");
    let out = cred(&["check", &cfg]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml"), "{err}");
}

#[test]
fn check_accepts_valid_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ok.toml", SMALL);
    let out = cred(&["check", &cfg]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("effdim_diag"));
}

#[test]
fn invalid_override_fails_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ok.toml", SMALL);
    let target = dir.path().join("out");
    let out = cred(&["run", &cfg, "--trials", "0", "--out", target.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(!target.exists());
}

#[test]
fn reruns_write_identical_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ok.toml", SMALL);
    let read = |sub: &str| {
        let target = dir.path().join(sub);
        let out = cred(&["run", &cfg, "--seed", "11", "--out", target.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (
            std::fs::read(target.join("effdim.csv")).unwrap(),
            std::fs::read(target.join("result.json")).unwrap(),
        )
    };
    let a = read("a");
    assert_eq!(a, read("b"));
    let manifest: String = String::from_utf8(a.1).unwrap();
    assert!(manifest.contains("\"master_seed\": 11"), "{manifest}");
}
