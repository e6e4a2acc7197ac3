use std::path::Path;
use std::process::{Command, Output};

use manigen::manifest::RunManifest;
use serde_json::Value;

fn manigen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manigen")).args(args).env("MG_THREADS", "1").output().unwrap()
}

fn error_line(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    let last = text.lines().last().expect("stderr has an error line");
    serde_json::from_str(last).unwrap()
}

fn write_config(dir: &Path) -> String {
    let cfg = serde_json::json!({
        "dataset": { "synthetic": { "kind": "spots", "n": 64, "size": 8 } },
        "decoder": { "train": { "epochs": 2, "batch_size": 16 } },
        "autoencoder": { "latent_dim": 3, "train": { "epochs": 2, "batch_size": 16 } },
        "diffusion": { "schedule": { "T": 50 }, "train": { "epochs": 2, "batch_size": 16 } }
    });
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn help_and_version_exit_zero() {
    let out = manigen(&["--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("train-decoder"));
    assert!(manigen(&["--version"]).status.success());
}

#[test]
fn errors_are_single_json_lines_with_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();

    let out = manigen(&["--out-dir", out_dir, "embed", "--input", "/nonexistent/data.mgt"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "FormatError");

    let out = manigen(&["embed", "--method", "pca"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "UsageError");

    let out = manigen(&["--config", "/nonexistent/config.json", "make-dataset"]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"sed": 1}"#).unwrap();
    let out = manigen(&["--config", bad.to_str().unwrap(), "make-dataset"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "ConfigError");

    let out = manigen(&["--out-dir", out_dir, "sample"]);
    assert_eq!(out.status.code(), Some(2));
    for line in String::from_utf8_lossy(&out.stderr).lines() {
        serde_json::from_str::<Value>(line).unwrap();
    }
}

#[test]
fn small_pipeline_keeps_manifest_valid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out_dir = dir.path().join("run");
    let o = out_dir.to_str().unwrap();
    let stages: [&[&str]; 6] = [
        &["make-dataset"],
        &["embed", "--method", "le", "--k", "8", "--dim", "2"],
        &["train-decoder"],
        &["train-ae"],
        &["train-diffusion"],
        &["sample", "--n", "4"],
    ];
    for s in stages {
        let mut args = vec!["--config", cfg.as_str(), "--out-dir", o, "--seed", "3"];
        args.extend_from_slice(s);
        let out = manigen(&args);
        assert!(out.status.success(), "{s:?}: {}", String::from_utf8_lossy(&out.stderr));
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["command"], s[0]);
        RunManifest::load_or_new(&out_dir).unwrap().verify(&out_dir).unwrap();
    }
    let m = RunManifest::load_or_new(&out_dir).unwrap();
    assert_eq!(m.stages.len(), 6);
    for f in ["embedding.mgt", "decoder.ckpt", "ae.ckpt", "denoiser.ckpt", "samples.mgt", "samples.pgm"] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
    let report = out_dir.join("decoder_report.json");
    let ae = out_dir.join("ae_report.json");
    let out = manigen(&["--out-dir", o, "evaluate", "--report", report.to_str().unwrap(), "--report", ae.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(out_dir.join("evaluation.txt")).unwrap();
    assert!(table.contains("le") && table.contains("autoencoder"), "{table}");
}
