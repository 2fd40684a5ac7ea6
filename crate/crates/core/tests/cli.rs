use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use smcwake::harness::{recipes, RunSummary, METRICS_FILE, SUMMARY_FILE};

fn smcwake(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smcwake")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let mut cfg = recipes::conjugate(3);
    cfg.n = 4;
    cfg.trainer.steps = 15;
    cfg.trainer.metrics_every = 5;
    cfg.trainer.smc.particles = 16;
    let path = dir.join("conjugate.toml");
    fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_then_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");

    let out = smcwake(&["run", &cfg, "--out", a.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = smcwake(&["run", "--config", &cfg, "--method", "rws", "--steps", "10", "--out", b.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let sa = RunSummary::load(a.join(SUMMARY_FILE)).unwrap();
    let sb = RunSummary::load(b.join(SUMMARY_FILE)).unwrap();
    assert_eq!(sa.steps_done, 15);
    assert_eq!((sb.method.as_str(), sb.steps_done), ("rws", 10));

    let (ma, mb) = (a.join(METRICS_FILE), b.join(METRICS_FILE));
    let out = smcwake(&["compare", ma.to_str().unwrap(), mb.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("final fwd_kl") && text.contains('*'), "{text}");

    let out = smcwake(&["compare", "--json", ma.to_str().unwrap(), mb.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["runs"].as_array().unwrap().len(), 2);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "name = \"x\"\nseed = \"zero\"\n").unwrap();
    let out = smcwake(&["run", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let out = smcwake(&["run", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = smcwake(&["recipes", "run", "no-such-recipe"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn recipes_are_listed() {
    let out = smcwake(&["recipes", "list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for r in recipes::RECIPES {
        assert!(text.contains(r.name));
    }
}
