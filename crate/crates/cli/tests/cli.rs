use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn sentinel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sentinel"))
        .args(args)
        .env_remove("SENTINEL_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("stdout is not json ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

fn demo_dir(kind: &str) -> (TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join(kind);
    let o = sentinel(&["demo", kind, "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    (tmp, dir)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn winners(v: &Value) -> Vec<u64> {
    v["winners"].as_array().unwrap().iter().map(|w| w.as_u64().unwrap()).collect()
}

#[test]
fn every_demo_succeeds() {
    for kind in ["injection", "delay", "replay"] {
        let o = sentinel(&["demo", kind]);
        assert_eq!(code(&o), 0, "{kind}: {}", String::from_utf8_lossy(&o.stderr));
        let v = stdout_json(&o);
        assert_eq!(v["all_clear"], Value::Bool(false), "{kind}");
    }
}

#[test]
fn demo_writes_artifacts() {
    let (_tmp, dir) = demo_dir("injection");
    for f in ["plant.json", "training.csv", "model.json", "scenario.json", "stream_clean.csv", "stream.csv", "steps.json", "verdict.json"] {
        let text = fs::read_to_string(dir.join(f)).unwrap_or_else(|_| panic!("{f} missing"));
        assert!(text.ends_with('\n'), "{f}");
    }
    let verdict: Value = serde_json::from_str(&fs::read_to_string(dir.join("verdict.json")).unwrap()).unwrap();
    assert_eq!(winners(&verdict), vec![1]);
}

#[test]
fn learn_reproduces_demo_model() {
    let (tmp, dir) = demo_dir("injection");
    let out = tmp.path().join("model.json");
    let o = sentinel(&["learn", p(&dir.join("training.csv")), "--n", "6", "--horizon", "41", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let learned: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let demo: Value = serde_json::from_str(&fs::read_to_string(dir.join("model.json")).unwrap()).unwrap();
    assert_eq!(learned["subsets"], demo["subsets"]);
    assert_eq!(learned["subsets"].as_array().unwrap().len(), 3);
}

#[test]
fn learn_rejects_short_or_unexciting_data() {
    let tmp = tempfile::tempdir().unwrap();
    let short = tmp.path().join("short.csv");
    let o = sentinel(&["simulate", "--len", "20", "--out", p(&short)]);
    assert_eq!(code(&o), 0);
    assert_eq!(code(&sentinel(&["learn", p(&short), "--n", "6"])), 1);

    let zero = tmp.path().join("zero.csv");
    let mut text = String::from("k,u_1,y_1,y_2,y_3\n");
    for k in 0..60 {
        text.push_str(&format!("{k},0,0,0,0\n"));
    }
    fs::write(&zero, text).unwrap();
    let o = sentinel(&["learn", p(&zero), "--n", "6"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("failing subsets"));
}

#[test]
fn identify_injection_on_demo_streams() {
    let (_tmp, dir) = demo_dir("injection");
    let model = dir.join("model.json");
    let clean = sentinel(&["identify", "injection", p(&dir.join("stream_clean.csv")), "--model", p(&model)]);
    assert_eq!(code(&clean), 0);
    assert_eq!(stdout_json(&clean)["all_clear"], Value::Bool(true));

    let attacked = sentinel(&["identify", "injection", p(&dir.join("stream.csv")), "--model", p(&model)]);
    assert_eq!(code(&attacked), 0);
    let v = stdout_json(&attacked);
    assert_eq!(v["all_clear"], Value::Bool(false));
    assert_eq!(winners(&v), vec![1]);

    assert_eq!(code(&sentinel(&["identify", "injection", p(&dir.join("stream.csv"))])), 1);
}

#[test]
fn identify_replay_and_delay_from_files() {
    let (_tmp, dir) = demo_dir("replay");
    let o = sentinel(&["identify", "replay", p(&dir.join("test.csv")), "--n", "6"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(winners(&stdout_json(&o)), vec![1]);

    // the same stream cut below the excitation length
    let short = dir.join("short.csv");
    let text = fs::read_to_string(dir.join("test.csv")).unwrap();
    fs::write(&short, text.lines().take(21).collect::<Vec<_>>().join("\n")).unwrap();
    assert_eq!(code(&sentinel(&["identify", "replay", p(&short), "--n", "6"])), 1);

    let (_tmp, dir) = demo_dir("delay");
    let o = sentinel(&["identify", "delay", p(&dir.join("impulse.csv")), "--relative-degrees", "1,2,1"]);
    assert_eq!(code(&o), 0);
    assert_eq!(winners(&stdout_json(&o)), vec![1, 3]);
    let o = sentinel(&["identify", "delay", p(&dir.join("impulse.csv")), "--plant", p(&dir.join("plant.json"))]);
    assert_eq!(winners(&stdout_json(&o)), vec![1, 3]);
}

#[test]
fn check_pe_exit_codes() {
    let (tmp, dir) = demo_dir("replay");
    let training = dir.join("training.csv");
    // the bootstrap prefix plus a certified window stays exciting
    let o = sentinel(&["check-pe", p(&training), "--order", "19"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["pass"], Value::Bool(true));

    let constant = tmp.path().join("constant.csv");
    let mut text = String::from("k,u_1\n");
    for k in 0..30 {
        text.push_str(&format!("{k},1.0\n"));
    }
    fs::write(&constant, text).unwrap();
    let o = sentinel(&["check-pe", p(&constant), "--order", "2"]);
    assert_eq!(code(&o), 2);
    assert_eq!(stdout_json(&o)["observed_rank"], 1);
    assert_eq!(code(&sentinel(&["check-pe", p(&constant), "--order", "1"])), 0);
}

#[test]
fn simulate_with_scenario_and_seed_fallback() {
    let (tmp, dir) = demo_dir("replay");
    let clean = sentinel(&["simulate", "--len", "30"]);
    assert_eq!(code(&clean), 0);
    let attacked = sentinel(&["simulate", "--len", "30", "--scenario", p(&dir.join("scenario.json"))]);
    assert_eq!(code(&attacked), 0);
    assert_ne!(clean.stdout, attacked.stdout);

    let via_env = Command::new(env!("CARGO_BIN_EXE_sentinel"))
        .args(["simulate", "--len", "30"])
        .env("SENTINEL_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(via_env.stdout, sentinel(&["simulate", "--len", "30", "--seed", "11"]).stdout);
    assert_ne!(via_env.stdout, clean.stdout);

    let input = tmp.path().join("input.csv");
    fs::write(&input, &clean.stdout).unwrap();
    let replayed = sentinel(&["simulate", "--input", p(&input)]);
    assert_eq!(replayed.stdout, clean.stdout);
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(code(&sentinel(&[])), 1);
    assert_eq!(code(&sentinel(&["demo", "spoofing"])), 1);
    assert_eq!(code(&sentinel(&["demo", "injection", "--n", "4"])), 1);
    assert_eq!(code(&sentinel(&["simulate", "--len", "10", "--max-attacked", "3", "--sensors", "3"])), 1);
    assert_eq!(code(&sentinel(&["simulate", "--len", "10", "--rank-tol", "-1"])), 1);
    assert_eq!(code(&sentinel(&["learn", "/nonexistent.csv", "--n", "6"])), 1);
    assert_eq!(code(&sentinel(&["--help"])), 0);
}
