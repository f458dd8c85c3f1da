use std::path::Path;
use std::process::{Command, Output};

fn ral(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ral")).args(args).current_dir(cwd).output().unwrap()
}

const QUICK: &[&str] = &["--cycles", "2", "--seeds", "0..2", "--rl-iterations", "10", "--lut-size", "8"];

#[test]
fn compare_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let mut args = vec!["compare", "--output-dir", out];
        args.extend_from_slice(QUICK);
        let o = ral(&args, dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["curves.csv", "summary.csv", "mgral/seed-1/iterations.jsonl"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let csv = std::fs::read_to_string(dir.path().join("a/curves.csv")).unwrap();
    assert!(csv.starts_with("strategy,seed,cycle,labeled,performance\n"));
    assert_eq!(csv.lines().count(), 1 + 4 * 2 * 3);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"strategies": ["random", "coreset"], "cycles": 4, "seeds": [5]}"#)
        .unwrap();
    let o = ral(&["compare", "--config", "c.json", "--cycles", "1"], dir.path());
    assert!(o.status.success());
    let out = String::from_utf8(o.stdout).unwrap();
    // 2 strategies x 1 seed x (1 cycle + initial)
    assert_eq!(out.lines().count(), 1 + 4);
    assert!(out.lines().skip(1).all(|l| l.starts_with("coreset,5,") || l.starts_with("random,5,")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| ral(args, dir.path()).status.code().unwrap();
    assert_eq!(code(&["compare", "--budget", "0"]), 1);
    assert_eq!(code(&["compare", "--not-a-flag"]), 1);
    assert_eq!(code(&["compare", "--config", "missing.json"]), 1);
    std::fs::write(dir.path().join("bad.json"), r#"{"budget": 3, "bogus": true}"#).unwrap();
    assert_eq!(code(&["compare", "--config", "bad.json"]), 1);
    assert_eq!(code(&["run", "--strategy", "nope"]), 1);
    // Runtime failure: a table built for one world queried against another.
    assert_eq!(code(&["build-lut", "--seed", "0", "--lut-size", "5", "--out", "t.jsonl"]), 0);
    assert_eq!(
        code(&["estimate", "--seed", "1", "--lut", "t.jsonl", "--ids", "0,1,2,3,4,5,6,7,8,9", "--labeled", "10"]),
        2
    );
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn lut_build_and_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let o = ral(
        &["build-lut", "--seed", "2", "--labeled", "0,1,2", "--budget", "4", "--lut-size", "20", "--out", "t.jsonl"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = std::fs::read_to_string(dir.path().join("t.jsonl")).unwrap().lines().count();
    assert_eq!(lines, 21);
    let o = ral(
        &["estimate", "--seed", "2", "--labeled", "0,1,2", "--budget", "4", "--lut", "t.jsonl", "--ids", "10,11,12,13"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let value = v["value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&value));
    assert!(v["source"] == "lut" || v["source"] == "direct");
}

#[test]
fn plot_writes_svg_and_rejects_header_only() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.csv"),
        "strategy,seed,cycle,labeled,performance\nrandom,0,0,10,0.5\nrandom,0,1,20,0.7\nrandom,0,2,30,0.8\n",
    )
    .unwrap();
    assert!(ral(&["plot", "--input", "c.csv", "--output", "c.svg"], dir.path()).status.success());
    let svg = std::fs::read_to_string(dir.path().join("c.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);

    std::fs::write(dir.path().join("e.csv"), "strategy,seed,cycle,labeled,performance\n").unwrap();
    let o = ral(&["plot", "--input", "e.csv", "--output", "e.svg"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
    assert!(!dir.path().join("e.svg").exists());
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--strategy", "mgral", "--seed", "4", "--output-dir", "out"];
    args.extend_from_slice(&QUICK[..2]);
    args.extend_from_slice(&QUICK[4..]);
    let o = ral(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("out/mgral/seed-4");
    for f in [
        "config.json",
        "world.json",
        "lut-cycle-0.jsonl",
        "lut-cycle-1.jsonl",
        "iterations.jsonl",
        "agent.json",
        "curve.csv",
    ] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    assert_eq!(String::from_utf8(o.stdout).unwrap(), std::fs::read_to_string(run.join("curve.csv")).unwrap());
}
