use std::path::Path;
use std::process::Command;

fn steprl() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_steprl"));
    cmd.env_remove("STEPRL_SEED").env_remove("STEPRL_OUT");
    cmd
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn run_writes_logs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let output = steprl()
        .args([
            "run", "--method", "gigrpo", "--seed", "3", "--rounds", "3", "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let summary: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(summary["method"], "gigrpo");
    assert_eq!(summary["seed"], 3);
    assert_eq!(summary["rounds"], 3);
    let rounds = std::fs::read_to_string(out.join("rounds.jsonl")).unwrap();
    assert_eq!(rounds.lines().count(), 3);
    for name in [
        "config.toml",
        "plans.jsonl",
        "summary.json",
        "summary.csv",
        "policy.jsonl",
    ] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn environment_overrides_seed_and_out() {
    let dir = tempfile::tempdir().unwrap();
    let output = steprl()
        .args(["run", "--rounds", "1"])
        .env("STEPRL_SEED", "9")
        .env("STEPRL_OUT", dir.path())
        .output()
        .unwrap();
    assert!(output.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(summary["seed"], 9);
    assert!(dir.path().join("rounds.jsonl").exists());
}

#[test]
fn config_file_is_read() {
    let output = steprl()
        .args(["run", "--rounds", "1", "--config"])
        .arg(configs().join("full.toml"))
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let summary: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(summary["method"], "step");
}

#[test]
fn invalid_input_exits_nonzero() {
    assert!(!steprl()
        .args(["run", "--method", "grpo"])
        .status()
        .unwrap()
        .success());
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "s0 = 1.5\n").unwrap();
    assert!(!steprl()
        .args(["run", "--config"])
        .arg(&bad)
        .status()
        .unwrap()
        .success());
    assert!(!steprl()
        .args(["run", "--config"])
        .arg(dir.path().join("missing.toml"))
        .status()
        .unwrap()
        .success());
}

#[test]
fn compare_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let output = steprl()
        .args(["compare", "--seeds", "2", "--rounds", "2", "--configs"])
        .arg(configs().join("tgrpo.toml"))
        .arg(configs().join("step.toml"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0:tgrpo,tgrpo,2,"));
    assert!(lines[2].starts_with("1:step,step,2,"));
    assert!(dir.path().join("1_step/seed1/rounds.jsonl").exists());
}

#[test]
fn suite_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("suite.json");
    assert!(steprl()
        .args(["suite", "--out"])
        .arg(&path)
        .status()
        .unwrap()
        .success());
    let suite: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(suite["tasks"].as_array().unwrap().len(), 64);
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "suite = \"suite.json\"\nrounds = 1\n").unwrap();
    let output = steprl().args(["run", "--config"]).arg(&config).output().unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
}
