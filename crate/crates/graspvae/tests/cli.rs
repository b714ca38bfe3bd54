//! End-to-end tests for the `graspvae` binary: every subcommand over a small
//! synthetic dataset, plus exit-code behavior on bad inputs.

use std::path::Path;
use std::process::{Command, Output};

fn graspvae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graspvae"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_exits_zero() {
    let out = graspvae(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in [
        "gen-data",
        "train",
        "generate",
        "sweep-latent",
        "estimate-dim",
        "eval",
        "hp-sweep",
    ] {
        assert!(text.contains(sub), "--help missing {sub}");
    }
}

#[test]
fn gen_data_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for out in [&a, &b] {
        let run = graspvae(&[
            "gen-data",
            "--out",
            path_str(out),
            "--per-pose",
            "10",
            "--seed",
            "4",
        ]);
        assert!(run.status.success());
        assert!(String::from_utf8(run.stdout).unwrap().contains("records: 20"));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn full_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    let data_csv = dir.path().join("data.csv");
    let model = dir.path().join("model.json");
    let loss_log = dir.path().join("loss.csv");
    let generated = dir.path().join("generated.jsonl");
    let generated_csv = dir.path().join("generated.csv");
    let swept = dir.path().join("sweep.jsonl");
    let spectrum = dir.path().join("spectrum.json");

    let out = graspvae(&[
        "gen-data",
        "--out",
        path_str(&data),
        "--csv",
        path_str(&data_csv),
        "--per-pose",
        "20",
        "--seed",
        "1",
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(&data_csv).unwrap();
    assert!(csv.starts_with("px,py,pz,qx,qy,qz,qw,spread,a,b,c,d,grasp_type"));
    assert_eq!(csv.lines().count(), 41);

    let out = graspvae(&[
        "train",
        "--data",
        path_str(&data),
        "--out",
        path_str(&model),
        "--epochs",
        "40",
        "--target-params",
        "2000",
        "--loss-log",
        path_str(&loss_log),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(&loss_log).unwrap();
    assert!(log.starts_with("epoch,recon_position,recon_orientation,recon_spread,kl,total"));
    assert_eq!(log.lines().count(), 41);

    let out = graspvae(&[
        "generate",
        "--model",
        path_str(&model),
        "--count",
        "25",
        "--plane",
        "0,0,1,0",
        "--out",
        path_str(&generated),
        "--csv",
        path_str(&generated_csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&generated).unwrap().lines().count(), 25);
    let gen_csv = std::fs::read_to_string(&generated_csv).unwrap();
    assert!(gen_csv.starts_with("z0,z1,z2,px,py,pz,qx,qy,qz,qw,spread"));

    let out = graspvae(&[
        "sweep-latent",
        "--model",
        path_str(&model),
        "--plane",
        "0,0,1,0",
        "--out",
        path_str(&swept),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // one center plus 8 points on each of the two default rings
    assert_eq!(std::fs::read_to_string(&swept).unwrap().lines().count(), 17);

    let out = graspvae(&[
        "estimate-dim",
        "--data",
        path_str(&data),
        "--json",
        path_str(&spectrum),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("estimated dimension:"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&spectrum).unwrap()).unwrap();
    assert!(report["dimension"].as_u64().is_some());

    let out = graspvae(&[
        "eval",
        "--model",
        path_str(&model),
        "--data",
        path_str(&data),
        "--samples",
        "50",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("mean position error"));
    assert!(text.contains("success share"));
}

#[test]
fn hp_sweep_writes_csv_and_correlations() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let json = dir.path().join("correlations.json");
    let out = graspvae(&[
        "hp-sweep",
        "--out-csv",
        path_str(&csv),
        "--out-json",
        path_str(&json),
        "--net-sizes",
        "13000",
        "--latent-dims",
        "2,3",
        "--kl-coeffs",
        "0.0005",
        "--epochs",
        "40",
        "--per-pose",
        "10",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv_text = std::fs::read_to_string(&csv).unwrap();
    assert!(csv_text.starts_with(
        "network_size,latent_dim,kl_coefficient,seed,reconstruction_error,final_kl"
    ));
    assert_eq!(csv_text.lines().count(), 3);
    let table: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(table["indicators"].as_array().unwrap().len(), 4);
    assert_eq!(table["hyperparameters"].as_array().unwrap().len(), 3);
}

#[test]
fn missing_data_file_reports_io_error() {
    let out = graspvae(&["estimate-dim", "--data", "/nonexistent/data.jsonl"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn malformed_dataset_reports_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "this is not json\n").unwrap();
    let out = graspvae(&["estimate-dim", "--data", path_str(&bad)]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn invalid_plane_argument_is_a_usage_error() {
    let out = graspvae(&[
        "generate",
        "--model",
        "m.json",
        "--plane",
        "1,2,3",
        "--out",
        "g.jsonl",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
