use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[cell]
resolution = 32
grid = 8

[ergodic]
kernels = 2
etas = [0.25, 0.125]
ks = [1, 2]

[dioph]
samples = 64
xi = 16
"#;

fn homog(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homog")).current_dir(dir).args(args).output().expect("binary runs")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn cell_writes_tables_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("small.toml"), SMALL).unwrap();
    let out = homog(tmp.path(), &["--config", "small.toml", "--out", "o", "cell"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().all(|l| l.starts_with("PASS ")), "{stdout}");
    let dir = tmp.path().join("o");
    assert!(dir.join("chi.csv").is_file() && dir.join("abar.json").is_file());
    let m = manifest(&dir);
    assert_eq!(m["command"], "cell");
    assert_eq!(m["all_pass"], true);
    let hash = m["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    let cfg = homog::config::Config::from_toml(SMALL).unwrap();
    assert_eq!(hash, cfg.hash());
}

#[test]
fn tables_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("small.toml"), SMALL).unwrap();
    for out in ["a", "b"] {
        assert!(homog(tmp.path(), &["--config", "small.toml", "--out", out, "ergodic"]).status.success());
    }
    let read = |d: &str| fs::read(tmp.path().join(d).join("ergodic.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn dioph_single_direction() {
    let tmp = tempfile::tempdir().unwrap();
    let out = homog(tmp.path(), &["--out", "o", "dioph", "--n", "0.6,-0.8", "--xi", "16"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("o/dioph.csv").is_file());
    let bad = homog(tmp.path(), &["--out", "o", "dioph", "--n", "1,0,0"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn bad_config_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "bogus = 1\n").unwrap();
    let out = homog(tmp.path(), &["--config", "bad.toml", "cell"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    assert!(!tmp.path().join("out/manifest.json").exists());
}
