use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn layergrow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layergrow"))
        .args(args)
        .output()
        .expect("spawn layergrow")
}

fn short_config(dir: &Path) -> String {
    let path = dir.join("short.json");
    let mut config: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/swiss_roll.json")).unwrap())
            .unwrap();
    config["it_max"] = 12.into();
    config["it_up"] = 4.into();
    fs::write(&path, config.to_string()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn train_then_indicators() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_config(dir.path());
    let run = dir.path().join("run");
    let out = layergrow(&["train", "--config", &config, "--seed", "3", "--out", run.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["config.json", "loss.csv", "grids.json", "summary.json", "checkpoint.json"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 3);
    assert_eq!(summary["K"], 4);

    let ind = dir.path().join("ind");
    let out = layergrow(&[
        "indicators",
        "--checkpoint",
        run.join("checkpoint.json").to_str().unwrap(),
        "--out",
        ind.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(ind.join("indicators.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "k,t_left,t_right,R_x,R_p,omega_x,omega_p,rho,eta");
    assert_eq!(csv.lines().count(), 1 + 4);
}

#[test]
fn invalid_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"dataset": "swiss-roll"}"#).unwrap();
    let run = dir.path().join("run");
    let out = layergrow(&["train", "--config", bad.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!run.exists());

    let mut config: serde_json::Value = serde_json::from_str(&fs::read_to_string(short_config(dir.path())).unwrap()).unwrap();
    config["width"] = 0.into();
    fs::write(&bad, config.to_string()).unwrap();
    let out = layergrow(&["train", "--config", bad.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!run.exists());
}

#[test]
fn corrupt_checkpoint_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cp = dir.path().join("checkpoint.json");
    fs::write(&cp, "{\"schema_version\": 1}").unwrap();
    let out = layergrow(&["indicators", "--checkpoint", cp.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_passes_and_detects_faults() {
    let out = layergrow(&["gradcheck"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    for fault in ["vjp-state", "nodal-gradient"] {
        let out = layergrow(&["gradcheck", "--inject-fault", fault]);
        assert_eq!(out.status.code(), Some(4), "fault {fault}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("FAILED"));
    }
}

#[test]
fn compare_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_config(dir.path());
    let out_dir = dir.path().join("cmp");
    let out = layergrow(&[
        "--threads",
        "1",
        "compare",
        "--config",
        &config,
        "--seeds",
        "0,1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,seed 0,seed 1");
    assert!(lines[1].starts_with("adaptive,") && lines[2].starts_with("random,") && lines[3].starts_with("fixed,"));
}

#[test]
fn compare_requires_config_or_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = layergrow(&["compare", "--out", dir.path().join("c").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
