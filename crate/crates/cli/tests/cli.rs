use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nhnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nhnn"))
        .args(args)
        .env("NHNN_LOG", "error")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let cfg = format!(
        r#"{{
  "synth": {{"n_speakers_per_group": 2, "utterances_per_speaker": 20, "d_s": 3, "n_mel": 4,
             "t_range": [4, 6], "label_effect": 3.0}},
  "model": {{"arch": {{"n_mel": 4, "channels": 4, "kernel_size": 3, "dilations": [1, 2], "hidden": 4, "n_class": 3}}}},
  "training": {{"batch_size": 8, "max_epochs": 2, "learning_rate": 0.01}},
  "experiment": {{"models": ["dcnn", "nhnn_fc"], "seeds": [0]}},
  "output": {{"dir": "out"}}{extra}
}}"#
    );
    let path = dir.join("run.json");
    fs::write(&path, cfg).unwrap();
    path.display().to_string()
}

#[test]
fn full_pipeline_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = nhnn(&["synth", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("80 utterances"));

    let cfg = write_config(tmp.path(), r#", "data": {"manifest": "out/data/manifest.json"}"#);
    let out = nhnn(&["cluster", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("2 clusters"));

    for cmd in ["train", "predict", "eval-loso"] {
        let out = nhnn(&[cmd, "--config", &cfg, "--jobs", "2"]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/reports/loso.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["models"].as_array().unwrap().len(), 2);
    assert_eq!(report["models"][0]["subject_uar"].as_array().unwrap().len(), 4);
    for d in ["model", "reports", "logs"] {
        assert!(tmp.path().join("out").join(d).is_dir());
    }
}

#[test]
fn seed_and_out_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = nhnn(&["synth", "--config", &cfg, "--seed", "7", "--out", dir.to_str().unwrap()]);
        assert!(out.status.success());
    }
    assert_eq!(
        fs::read(a.join("data/manifest.json")).unwrap(),
        fs::read(b.join("data/manifest.json")).unwrap()
    );
    let log: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("logs/synth.json")).unwrap()).unwrap();
    assert_eq!(log["config"]["synth"]["seed"], 7);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    // unknown key
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"trainin": {}}"#).unwrap();
    assert_eq!(nhnn(&["synth", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
    // missing data file
    let cfg = write_config(tmp.path(), r#", "data": {"manifest": "nope.json"}"#);
    assert_eq!(nhnn(&["train", "--config", &cfg]).status.code(), Some(1));
    assert!(!tmp.path().join("out").exists());
    // bad flag
    assert_eq!(nhnn(&["synth", "--jobs", "many"]).status.code(), Some(1));
    // output path below a regular file
    let cfg = write_config(tmp.path(), "");
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = nhnn(&["synth", "--config", &cfg, "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(nhnn(&["--help"]).status.code(), Some(0));
}
