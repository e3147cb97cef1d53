//! Black-box tests of the `actlearn` binary: flag handling, strict config
//! rejection, and error reporting. Heavier subcommands that need trained
//! checkpoints are exercised in the acceptance suite instead.

use std::path::Path;
use std::process::{Command, Output};

fn actlearn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_actlearn"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn help_lists_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = actlearn(&["--help"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    for sub in [
        "train",
        "eval",
        "classify",
        "generate",
        "complete",
        "score",
        "features",
        "verify-properties",
        "report",
    ] {
        assert!(text.contains(sub), "help is missing `{sub}`:\n{text}");
    }
}

#[test]
fn unknown_config_key_fails_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(
        &cfg,
        "experiment = x\ndataset.kind = mnist\ntrain.epochs = 1\ntrain.ate = 5\n",
    )
    .unwrap();
    let out = actlearn(&["train", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("train.ate"), "stderr: {err}");
    assert!(err.contains("line 4"), "stderr: {err}");
}

#[test]
fn duplicate_config_key_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("dup.cfg");
    std::fs::write(
        &cfg,
        "experiment = x\ndataset.kind = mnist\ntrain.epochs = 1\ntrain.epochs = 2\n",
    )
    .unwrap();
    let out = actlearn(&["train", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("duplicate"));
}

#[test]
fn train_without_config_flag_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = actlearn(&["train"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--config"));
}

#[test]
fn score_without_checkpoint_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = actlearn(&["score"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--checkpoint"));
}

#[test]
fn missing_dataset_files_name_file_and_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ok.cfg");
    std::fs::write(
        &cfg,
        "experiment = x\ndataset.kind = mnist\ntrain.epochs = 1\n",
    )
    .unwrap();
    let out = actlearn(
        &[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--dataset-dir",
            "/nonexistent-data-dir",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("train-images-idx3-ubyte"), "stderr: {err}");
    assert!(err.contains("/nonexistent-data-dir"), "stderr: {err}");
}

#[test]
fn verify_properties_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("props");
    let out = actlearn(
        &[
            "verify-properties",
            "--seed",
            "7",
            "--out",
            out_dir.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["seed"], 7);
    assert_eq!(json["variants"].as_array().unwrap().len(), 2);
    assert!(json["sign_flip_control"]["pass"].as_bool().unwrap());
    let file: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("properties.json")).unwrap())
            .unwrap();
    assert_eq!(file["seed"], 7);
}

#[test]
fn report_merges_existing_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("runs").join("demo");
    std::fs::create_dir_all(&run).unwrap();
    std::fs::write(
        run.join("summary.json"),
        r#"{"experiment":"demo","seed":3,"epochs_run":2,"test_error":0.5,
            "best_val_error":null,"final_norm_activation":0.25,"wall_seconds":0.0}"#,
    )
    .unwrap();
    let out = actlearn(
        &["report", "--out", dir.path().join("runs").to_str().unwrap()],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("experiment,seed,epochs_run"));
    assert!(text.contains("demo,3,2,0.500000"), "table: {text}");
}
