use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
  "sizes": {"n_source": 400, "n_target": 200, "n_adapt": 100, "n_test": 100},
  "network": {"hidden": [16, 16]},
  "tasks": {"n_tasks": 4},
  "train": {"max_iterations": 40},
  "meta": {"task_batch": 4, "max_meta_iterations": 5, "adapt_steps": 10},
  "joint_max_iterations": 40
}"#;

fn fdkg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdkg")).args(args).env("FDKG_THREADS", "1").output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = fdkg(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.json", "report.csv", "report.json", "keys.txt", "randomness.csv", "randomness_summary.csv", "meta_loss.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("algorithm,env,snr_db,nmse,ker,kgr,wall_time_s,seed\n"));
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",3")));

    let model = out.join("models").join("meta_env2.fdkg");
    let o = fdkg(&["model", "inspect", model.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("dims: 128 -> 16 -> 16 -> 128"));

    let nist_out = dir.path().join("nist.csv");
    let o = fdkg(&["nist", "--keys", out.join("keys.txt").to_str().unwrap(), "--out", nist_out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let details = std::fs::read_to_string(nist_out).unwrap();
    assert!(details.starts_with("test,params,p_values,pass\n"));
    assert!(String::from_utf8_lossy(&o.stdout).lines().count() == 9);
}

#[test]
fn sweep_prefixes_axis_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &TINY.replace("\"joint_max_iterations\": 40", "\"joint_max_iterations\": 40, \"algorithms\": [\"direct\"]"),
    );
    let out = dir.path().join("sweep");
    let o = fdkg(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--axis", "snr", "--values", "10,30"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("sweep_snr.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("axis,value,algorithm"));
    assert_eq!(lines.count(), 2 * 2);
}

#[test]
fn dataset_files_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("ds");
    let o = fdkg(&["dataset", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (ds, side) = fdkg::formats::load_dataset(&out.join("target_env2_adapt.fdkg-ds")).unwrap();
    assert_eq!(ds.len(), 100);
    assert_eq!(side.environment.env_id, 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), r#"{"scale_factor": 2.0}"#);
    assert_eq!(fdkg(&["run", "--config", &bad, "--out", dir.path().to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.path().join("nope.json");
    assert_eq!(fdkg(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(1));
    let keys = dir.path().join("keys.txt");
    std::fs::write(&keys, "0102\n").unwrap();
    let out = dir.path().join("n.csv");
    assert_ne!(fdkg(&["nist", "--keys", keys.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.code(), Some(0));
}
