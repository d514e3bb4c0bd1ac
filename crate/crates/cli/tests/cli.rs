use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tfelab_cli::config::{ExperimentConfig, COMMANDS};
use tfelab_cli::manifest::{read_manifest, FileStatus, FAILURE_NAME, MANIFEST_NAME};

const SMALL_KERNEL: &str = "y_max = 20.0\ncells = 1600\nenvelope_window = [2.0, 8.0]\n";

fn tfelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tfelab"))
        .args(args)
        .env_remove("TFELAB_OUT")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn run_kernel(dir: &Path) -> String {
    let cfg = write(dir, "kernel.toml", SMALL_KERNEL);
    let out = dir.join("run");
    let o = tfelab(&["--out", out.to_str().unwrap(), "kernel", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join(MANIFEST_NAME).to_str().unwrap().to_string()
}

#[test]
fn unknown_key_exits_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "y_max = 20.0\ncels = 1600\n");
    let out = dir.path().join("out");
    let o = tfelab(&["--out", out.to_str().unwrap(), "kernel", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cels"));
    assert!(!out.exists());
}

#[test]
fn unknown_key_in_tagged_initial_data_is_rejected() {
    let text = "[initial]\nkind = \"smooth_bump\"\ncenter = 0.0\nwidth = 1.0\nheight = 1.0\nhieght = 2.0\n";
    assert!(ExperimentConfig::from_toml("simulate", text).is_err());
    let ok = text.replace("hieght = 2.0\n", "");
    assert!(ExperimentConfig::from_toml("simulate", &ok).is_ok());
}

#[test]
fn invalid_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "cells = 1602\n");
    let out = dir.path().join("out");
    let o = tfelab(&["--out", out.to_str().unwrap(), "kernel", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn numerical_failure_exits_3_with_marker() {
    let dir = tempfile::tempdir().unwrap();
    let text = "t_final = 0.1\n[model]\nn = 2.0\nepsilon = 0.01\n[solver]\nfixed_dt = 0.05\ndt_min = 0.05\nnewton_max_iter = 1\nnewton_tol = 1e-14\n";
    let cfg = write(dir.path(), "sim.toml", text);
    let out = dir.path().join("out");
    let o = tfelab(&["--out", out.to_str().unwrap(), "simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let marker: serde_json::Value = serde_json::from_slice(&fs::read(out.join(FAILURE_NAME)).unwrap()).unwrap();
    assert_eq!(marker["exit_code"], 3);
    assert_eq!(marker["detail"]["kind"], "step_collapse");
    assert!(!out.join(MANIFEST_NAME).exists());
}

#[test]
fn manifest_lists_outputs_with_digests() {
    let dir = tempfile::tempdir().unwrap();
    let path = run_kernel(dir.path());
    let m = read_manifest(Path::new(&path)).unwrap();
    assert_eq!(m.command, "kernel");
    let names: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
    assert_eq!(names, ["kernel.csv", "kernel.json"]);
    for f in &m.files {
        let bytes = fs::read(dir.path().join("run").join(&f.path)).unwrap();
        assert_eq!(bytes.len() as u64, f.bytes);
        assert_eq!(tfelab_cli::manifest::sha256_hex(&bytes), f.sha256);
    }
    let cfg = ExperimentConfig::from_toml("kernel", SMALL_KERNEL).unwrap();
    assert_eq!(m.config_hash, cfg.hash());
    assert!(m.tolerances.contains_key("kernel.quadrature_tol"));
}

#[test]
fn reproduce_matches_fresh_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = run_kernel(dir.path());
    let o = tfelab(&["reproduce", &path]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["all_match"], true);
    assert!(report["first_divergence"].is_null());
}

#[test]
fn reproduce_rejects_edited_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = run_kernel(dir.path());
    let text = fs::read_to_string(&path)
        .unwrap()
        .replace("cells = 1600", "cells = 1604");
    fs::write(&path, text).unwrap();
    let o = tfelab(&["reproduce", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash mismatch"));
}

#[test]
fn reproduce_reports_missing_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = run_kernel(dir.path());
    fs::remove_file(dir.path().join("run/kernel.json")).unwrap();
    let report = tfelab_cli::reproduce(Path::new(&path), 1).unwrap();
    assert!(!report.all_match);
    let status: Vec<FileStatus> = report.files.iter().map(|f| f.status).collect();
    assert_eq!(status, [FileStatus::Match, FileStatus::Missing]);
    assert_eq!(report.first_divergence.as_deref(), Some("kernel.json"));
    assert_eq!(tfelab(&["reproduce", &path]).status.code(), Some(3));
}

#[test]
fn reproduce_flags_corrupted_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = run_kernel(dir.path());
    let csv = dir.path().join("run/kernel.csv");
    let mut bytes = fs::read(&csv).unwrap();
    bytes.extend_from_slice(b"0,0\n");
    fs::write(&csv, bytes).unwrap();
    let report = tfelab_cli::reproduce(Path::new(&path), 1).unwrap();
    assert_eq!(report.files[0].status, FileStatus::Corrupted);
    assert!(!report.all_match);
}

#[test]
fn default_configs_round_trip() {
    for command in COMMANDS {
        let cfg = ExperimentConfig::from_toml(command, "").unwrap();
        let canonical = cfg.canonical();
        let again = ExperimentConfig::from_toml(command, &canonical).unwrap();
        assert_eq!(again, cfg, "{command}");
        assert_eq!(again.canonical(), canonical, "{command}");
        assert_eq!(again.hash(), cfg.hash());
    }
}

#[test]
fn hash_depends_on_values_and_command() {
    let a = ExperimentConfig::from_toml("kernel", "").unwrap();
    let b = ExperimentConfig::from_toml("kernel", "y_max = 40.0\n").unwrap();
    let c = ExperimentConfig::from_toml("kernel", "y_max = 41.0\n").unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), c.hash());
    assert_ne!(
        tfelab_cli::config::config_hash("kernel", ""),
        tfelab_cli::config::config_hash("orbit", "")
    );
}

#[test]
fn help_states_the_equations() {
    let expected = [
        ("kernel", "exp(-xi^4) cos(xi y)"),
        ("kernel", "F(0) = Gamma(5/4)/pi"),
        ("simulate", "u_t = -(phi(u) u_xxx)_x"),
        ("simulate", "int phi(u) u_xxx^2"),
        ("homotopy", "w_t = -w_xxxx"),
        ("homotopy", "exp(-1/sqrt(n))"),
        ("branching", "(ln|w| w_xxx)_x"),
        ("orbit", "|phi|^(-n) phi"),
        ("scan", "A - B ln(n_h - n)"),
        ("riemann", "(T - t)^(-1/n)"),
        ("riemann", "x^(3/n)"),
        ("sweep", "{|u| < delta}"),
    ];
    for (sub, formula) in expected {
        let o = tfelab(&[sub, "--help"]);
        assert!(o.status.success());
        let text = String::from_utf8_lossy(&o.stdout).replace('\n', " ");
        let squashed: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
        assert!(squashed.contains(formula), "{sub}: missing {formula:?}");
        assert!(squashed.contains("--config"), "{sub}");
    }
}

#[test]
fn top_level_help_lists_every_subcommand() {
    let o = tfelab(&["--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for c in COMMANDS.iter().chain(["reproduce"].iter()) {
        assert!(text.contains(c), "{c}");
    }
    assert!(text.contains("--out") && text.contains("--workers"));
    tfelab_cli::cli::command().debug_assert();
}

#[test]
fn out_dir_can_come_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "kernel.toml", SMALL_KERNEL);
    let out = dir.path().join("env_out");
    let o = Command::new(env!("CARGO_BIN_EXE_tfelab"))
        .args(["kernel", "--config", &cfg])
        .env("TFELAB_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join(MANIFEST_NAME).exists());
}
