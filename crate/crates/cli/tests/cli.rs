use std::path::PathBuf;
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.toml"))
}

fn drst(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drst")).args(args).output().unwrap()
}

#[test]
fn estimate_to_stdout() {
    let cfg = config("estimate");
    let out = drst(&["estimate", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("experiment,config_hash,m,n,kind,statistic,value,stderr,trials,seed\n"));
    assert!(text.lines().any(|l| l.contains(",tl,theta,4.0000000000000000e0,")), "{text}");
}

#[test]
fn file_output_is_reproducible_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("mismatch-check");
    let run = |name: &str, extra: &[&str]| {
        let path = dir.path().join(name);
        let mut args = vec!["mismatch-check", "--config", cfg.to_str().unwrap(), "--out", path.to_str().unwrap()];
        args.extend_from_slice(extra);
        let out = drst(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(&path).unwrap()
    };
    let a = run("a.json", &["--format", "json"]);
    let b = run("b.json", &["--format", "json", "--threads", "2"]);
    assert_eq!(a, b);
    assert!(dir.path().join("a.json.config.json").exists());
    let c = run("c.csv", &["--seed-override", "99"]);
    let d = run("d.csv", &[]);
    assert_ne!(c, d);
    let echo = std::fs::read_to_string(dir.path().join("c.csv.config.json")).unwrap();
    assert!(echo.contains("\"seed\":99"), "{echo}");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "experiment = \"estimate\"\nseed = 1\ntypo = 3\n").unwrap();
    assert_eq!(drst(&["estimate", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    let cfg = config("estimate");
    assert_eq!(drst(&["mse-sweep", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(drst(&["bogus", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.path().join("missing.toml");
    assert_eq!(drst(&["estimate", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3_with_trial() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("mismatch-check"))
        .unwrap()
        .replace("p_x = [0.5, 0.5]", "p_x = [0.0, 1.0]")
        .replace("q_x = [0.8, 0.2]", "q_x = [0.5, 0.5]");
    let path = dir.path().join("zero-weight.toml");
    std::fs::write(&path, text).unwrap();
    let out = drst(&["mismatch-check", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("failed trial: 0"), "{stderr}");
}
