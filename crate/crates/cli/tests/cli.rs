//! The binary's exit-code contract and run-directory layout.

use std::path::Path;
use std::process::{Command, Output};

fn ecgbench(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecgbench"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Three synthetic CSV records ingested into `beats.ecgb`.
fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let o = ecgbench(dir.path(), &["synth", "--out-dir", "recs", "--records", "3", "--beats", "60"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = ecgbench(dir.path(), &["ingest", "recs/s000", "recs/s001.csv", "recs/s001.ann.csv", "recs/s002", "-o", "beats.ecgb"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("ingested 3 records: 180 beats"));
    dir
}

const TINY: &str = r#"{
    "dataset": "beats.ecgb",
    "profile": "tiny-beat",
    "folds": {"n_folds": 2, "train_size": 80, "test_size": 40},
    "train": {"batch_size": 8, "max_iterations": 30, "eval_interval": 10}
}"#;

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&ecgbench(dir.path(), &["ingest", "-o", "x.ecgb"])), 1);
    assert_eq!(code(&ecgbench(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&ecgbench(dir.path(), &["--help"])), 0);
    std::fs::write(dir.path().join("bad.json"), r#"{"dataset": "b.ecgb", "lr": 1}"#).unwrap();
    let o = ecgbench(dir.path(), &["train", "-c", "bad.json", "-o", "run"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("unknown field"), "{}", stderr(&o));
    assert_eq!(code(&ecgbench(dir.path(), &["gradcheck", "--profile", "nope"])), 1);
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = ecgbench(dir.path(), &["ingest", "missing", "-o", "x.ecgb"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing"));
    std::fs::write(dir.path().join("trunc.hea"), "trunc 1 360 100\ntrunc.dat 212 200 11 1024\n").unwrap();
    std::fs::write(dir.path().join("trunc.dat"), [0u8; 30]).unwrap();
    std::fs::write(dir.path().join("trunc.atr"), [0u8; 2]).unwrap();
    let o = ecgbench(dir.path(), &["ingest", "trunc", "-o", "x.ecgb"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("trunc.dat"), "{}", stderr(&o));
    std::fs::create_dir(dir.path().join("empty-run")).unwrap();
    assert_eq!(code(&ecgbench(dir.path(), &["sweep", "--run", "empty-run"])), 2);
}

#[test]
fn corrupted_backward_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = ecgbench(dir.path(), &["gradcheck", "--profile", "tiny-1d"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.starts_with("PASS tiny-1d"));
    assert!(out.contains("conv1.weight") && out.contains("fc3.bias"));
    let o = ecgbench(dir.path(), &["gradcheck", "--corrupt-backward", "0.01"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn render_is_reproducible_and_echoes_bounds() {
    let dir = fixture();
    for out in ["a.ecgi", "b.ecgi"] {
        let o = ecgbench(dir.path(), &["render", "--beats", "beats.ecgb", "-o", out, "--png-dir", "png", "--png-limit", "2"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = std::fs::read(dir.path().join("a.ecgi")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.ecgi")).unwrap());
    assert_eq!(a.len(), 12 + 180 * (1 + 65536));
    let bounds: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.ecgi.bounds.json")).unwrap()).unwrap();
    assert!(bounds["lo"].as_f64().unwrap() < bounds["hi"].as_f64().unwrap());
    let o = ecgbench(dir.path(), &["render", "--beats", "beats.ecgb", "-o", "c.ecgi", "--bounds", "a.ecgi.bounds.json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(a, std::fs::read(dir.path().join("c.ecgi")).unwrap());
    assert_eq!(std::fs::read_dir(dir.path().join("png")).unwrap().count(), 2);
}

#[test]
fn train_eval_sweep_round_trip() {
    let dir = fixture();
    std::fs::write(dir.path().join("exp.json"), TINY).unwrap();
    let o = ecgbench(dir.path(), &["train", "-c", "exp.json", "-o", "run", "--activation", "swish", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let run = dir.path().join("run");
    for f in ["config.json", "report.json", "history.csv", "weights.ecgw", "folds/fold_1/history.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(resolved["activation"], "swish");
    assert_eq!(resolved["seed"], 3);
    assert!(resolved["profile"]["layers"].is_array(), "profile is inlined");
    assert_eq!(resolved["train"]["momentum"], 0.9);

    // The resolved config alone reproduces the run.
    let o = ecgbench(dir.path(), &["train", "-c", "run/config.json", "-o", "again"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["report.json", "history.csv"] {
        assert_eq!(std::fs::read(run.join(f)).unwrap(), std::fs::read(dir.path().join("again").join(f)).unwrap());
    }

    let o = ecgbench(dir.path(), &["eval", "--run", "run"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let eval: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(eval["matrix"], report["folds"][0]["matrix"]);

    let o = ecgbench(dir.path(), &["sweep", "--run", "run", "--snr", "30"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(run.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("swish-1d,30,"));
    ecgbench(dir.path(), &["sweep", "--run", "run"]);
    let csv = std::fs::read_to_string(run.join("sweep.csv")).unwrap();
    let snrs: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(snrs, ["none", "35", "30", "25", "20"]);
}

#[test]
fn activation_flag_changes_only_the_activation() {
    let dir = fixture();
    std::fs::write(dir.path().join("exp.json"), TINY).unwrap();
    let mut configs = Vec::new();
    for act in ["swish", "relu"] {
        let out = format!("run-{act}");
        let o = ecgbench(dir.path(), &["train", "-c", "exp.json", "-o", &out, "--activation", act]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(&out).join("config.json")).unwrap()).unwrap();
        v["output_dir"] = serde_json::Value::Null;
        v["activation"] = serde_json::Value::Null;
        for layer in v["profile"]["layers"].as_array_mut().unwrap() {
            if layer["type"] == "activation" {
                layer["activation"] = serde_json::Value::Null;
            }
        }
        configs.push(v);
    }
    assert_eq!(configs[0], configs[1]);
}

#[test]
fn init_flag_is_recorded() {
    let dir = fixture();
    std::fs::write(dir.path().join("exp.json"), TINY).unwrap();
    let o = ecgbench(dir.path(), &["train", "-c", "exp.json", "-o", "run", "--init", "normal:0.01"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/config.json")).unwrap()).unwrap();
    assert_eq!(v["init"], "normal:0.01");
    assert_eq!(code(&ecgbench(dir.path(), &["train", "-c", "exp.json", "-o", "x", "--init", "normal:-1"])), 1);
}
