use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn sllm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sllm")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn oracle_check_passes_at_small_cutoff() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let r = sllm(&["run", "oracle-check", "--n-max", "8", "--output-dir", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["summary"]["passed"], true);
    assert!(m["summary"]["max_abs_diff"].as_f64().unwrap() < 1e-8);
    assert_eq!(m["config"]["n_max"], 8);
    let body = fs::read_to_string(out.join("oracle.csv")).unwrap();
    assert_eq!(body.lines().count(), 1 + 81);
}

#[test]
fn oracle_check_above_limit_is_a_run_error() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let r = sllm(&["run", "oracle-check", "--n-max", "30", "--output-dir", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    let rec: serde_json::Value = serde_json::from_slice(&r.stderr).unwrap();
    assert_eq!(rec["kind"], "run");
    assert!(!out.exists());
}

#[test]
fn empty_gain_grid_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "A_grid = []\n");
    let out = tmp.path().join("never");
    let r = sllm(&[
        "run",
        "spectrum-sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2));
    let rec: serde_json::Value = serde_json::from_slice(&r.stderr).unwrap();
    assert_eq!(rec["status"], "error");
    assert_eq!(rec["kind"], "validation");
    assert!(!out.exists());
}

#[test]
fn unknown_key_names_line_and_key() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "A_grid = [1.0]\nN_lst = [2.0]\n");
    let r = sllm(&["run", "steady-sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    let rec: serde_json::Value = serde_json::from_slice(&r.stderr).unwrap();
    let msg = rec["message"].as_str().unwrap();
    assert!(msg.contains("N_lst") && msg.contains("line 2"), "{msg}");
}

#[test]
fn spectrum_sweep_schema_and_sector_frequencies() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "A_grid = [0.75, 1.25]\nN_list = [100.0]\nsectors = [0, 1, 2]\nlevels = [0]\n",
    );
    let out = tmp.path().join("s");
    let r = sllm(&[
        "run",
        "spectrum-sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let body = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("N,A_over_gamma,k,j,re_lambda,im_lambda,spurious"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 6);
    for row in &rows {
        let k: f64 = row[2].parse().unwrap();
        let im: f64 = row[5].parse().unwrap();
        let re: f64 = row[4].parse().unwrap();
        assert!((im + k).abs() < 1e-10, "Im λ0 = −kω");
        assert!(re <= 1e-10);
    }
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "t.toml",
        "n_traj = 6\nt_f = 0.5\nn_max = 10\nrecord_stride = 20\nunraveling = \"homodyne\"\nbeta_ref = [2.0, 2.0, 2.0]\n",
    );
    let mut bodies = Vec::new();
    for (i, threads) in ["1", "3", "1"].iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let r = sllm(&[
            "run",
            "trajectory",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "17",
            "--threads",
            threads,
            "--output-dir",
            out.to_str().unwrap(),
        ]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        bodies.push(csv_files(&out));
    }
    assert_eq!(bodies[0].len(), 2 * 6 + 1);
    assert_eq!(bodies[0], bodies[1]);
    assert_eq!(bodies[0], bodies[2]);
}

#[test]
fn seed_changes_trajectories() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "t.toml", "n_traj = 2\nt_f = 2.0\nn_max = 10\n");
    let mut bodies = Vec::new();
    for seed in ["1", "2"] {
        let out = tmp.path().join(seed);
        let r = sllm(&[
            "run",
            "trajectory",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            seed,
            "--output-dir",
            out.to_str().unwrap(),
        ]);
        assert!(r.status.success());
        bodies.push(fs::read(out.join("ensemble.csv")).unwrap());
    }
    assert_ne!(bodies[0], bodies[1]);
}

#[test]
fn manifest_records_resolved_config_and_version() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "A_grid = [1.25]\nN_list = [100.0]\n");
    let out = tmp.path().join("s");
    let r = sllm(&[
        "run",
        "steady-sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["scenario"], "steady-sweep");
    assert_eq!(m["config"]["B"], 0.1);
    assert_eq!(m["config"]["eta"], 0.0);
    assert!(m["version"].as_str().unwrap().starts_with('v'));
    assert!(m["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    let body = fs::read_to_string(out.join("steady.csv")).unwrap();
    let row: Vec<f64> = body.lines().nth(1).unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert!((row[4] - 2.6318).abs() < 1e-3, "n/N = {}", row[4]);
}

#[test]
fn seed_flag_rejected_where_unused() {
    let r = sllm(&["run", "pfunction", "--seed", "3"]);
    assert_eq!(r.status.code(), Some(2));
}
