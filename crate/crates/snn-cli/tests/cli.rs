//! End-to-end tests for the `snn` binary and the config/plot helpers.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use snn_cli::config::{self, AppConfig};
use snn_cli::plot;
use snn_core::events::synth::LabelMode;
use snn_core::train::FusionMode;

fn snn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_snn"))
}

fn run(args: &[&str]) -> Output {
    snn().args(args).output().expect("spawn snn")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Smallest config that still trains: 16x16, four motion classes, two
/// samples per class, one epoch.
fn tiny_cfg(out_dir: &Path) -> AppConfig {
    let mut cfg = AppConfig::default();
    cfg.synth.width = 16;
    cfg.synth.height = 16;
    cfg.synth.blob_radius = 2.0;
    cfg.synth.duration_us = 300_000;
    cfg.synth.label_mode = LabelMode::Motion;
    cfg.train_per_combo = 2;
    cfg.test_per_combo = 1;
    cfg.train.epochs = 1;
    cfg.train.lr = 0.01;
    cfg.train.batch_size = 4;
    cfg.train.t_steps = 5;
    cfg.train.dt_us = 20_000;
    cfg.train.t_lat_us = 100_000;
    cfg.arch.conv_channels = vec![4];
    cfg.arch.fc_hidden = vec![16];
    cfg.arch.voting = 2;
    cfg.out_dir = out_dir.display().to_string();
    cfg
}

fn write_cfg(dir: &Path, cfg: &AppConfig) -> PathBuf {
    let path = dir.join("config.ini");
    fs::write(&path, config::echo(cfg)).expect("write config");
    path
}

#[test]
fn echo_roundtrip_default() {
    let cfg = AppConfig::default();
    let back = config::parse(&config::echo(&cfg)).expect("reparse");
    assert_eq!(back, cfg);
}

#[test]
fn echo_roundtrip_modified() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny_cfg(tmp.path());
    cfg.train.fusion = FusionMode::Cma;
    cfg.arch.dropout = 0.25;
    cfg.arch.placement = 1;
    cfg.arch.cma.literal_order = true;
    cfg.checkpoint = "model.snck".into();
    cfg.root = "data/run1".into();
    let back = config::parse(&config::echo(&cfg)).expect("reparse");
    assert_eq!(back, cfg);
}

#[test]
fn unknown_key_is_named_and_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.ini");
    fs::write(&path, "[train]\nnonsense = 3\n").unwrap();
    let out = run(&["train", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("train.nonsense"), "stderr: {}", stderr(&out));
}

#[test]
fn invalid_fusion_value_lists_choices() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_cfg(tmp.path(), &tiny_cfg(tmp.path()));
    let out = run(&[
        "train",
        "--config",
        path.to_str().unwrap(),
        "--set",
        "fusion.mode=bogus",
    ]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("fusion.mode"), "stderr: {err}");
    assert!(err.contains("none-event") && err.contains("CMA"), "stderr: {err}");
}

#[test]
fn missing_config_file_exits_2() {
    let out = run(&["train", "--config", "/nonexistent/nowhere.ini"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn config_errors_are_collected_not_first_only() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_cfg(tmp.path(), &tiny_cfg(tmp.path()));
    let out = run(&[
        "train",
        "--config",
        path.to_str().unwrap(),
        "--set",
        "train.bogus_a=1",
        "--set",
        "data.width=wide",
    ]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("train.bogus_a") && err.contains("data.width"), "stderr: {err}");
}

#[test]
fn perturb_without_checkpoint_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_cfg(tmp.path(), &tiny_cfg(tmp.path()));
    let out = run(&["perturb", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("perturbation.checkpoint"), "stderr: {}", stderr(&out));
}

#[test]
fn perturb_with_missing_checkpoint_file_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny_cfg(tmp.path());
    cfg.checkpoint = tmp.path().join("missing.snck").display().to_string();
    let path = write_cfg(tmp.path(), &cfg);
    let out = run(&["perturb", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}

#[test]
fn report_on_dir_without_csvs_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["report", "--bundle", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}

#[test]
fn report_on_malformed_csv_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("epochs.csv"), "wrong,header\n1,2\n").unwrap();
    let out = run(&["report", "--bundle", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}

fn dir_snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                files.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn synth_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let mut cfg = tiny_cfg(&a);
    cfg.train_per_combo = 1;
    let path = write_cfg(tmp.path(), &cfg);
    for out_dir in [&a, &b] {
        let out = run(&[
            "synth",
            "--config",
            path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    let snap_a = dir_snapshot(&a);
    let snap_b = dir_snapshot(&b);
    assert!(snap_a.len() > 2);
    let names = |s: &[(String, Vec<u8>)]| s.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    assert_eq!(names(&snap_a), names(&snap_b));
    for ((name, bytes_a), (_, bytes_b)) in snap_a.iter().zip(&snap_b) {
        // The config echo records the actual output dir, which differs
        // between the two runs by construction.
        if name == "config.ini" {
            continue;
        }
        assert!(bytes_a == bytes_b, "{name} differs between reruns");
    }
}

#[test]
fn train_bundle_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let cfg = tiny_cfg(&out_dir);
    let path = write_cfg(tmp.path(), &cfg);
    let out = run(&["train", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    for name in ["config.ini", "epochs.csv", "confusion.csv", "summary.txt", "model.snck"] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let epochs = fs::read_to_string(out_dir.join("epochs.csv")).unwrap();
    let mut lines = epochs.lines();
    assert_eq!(lines.next(), Some("epoch,train_loss,train_acc,test_acc"));
    assert_eq!(lines.count(), cfg.train.epochs);
    // The echoed config reparses to the invoked one (out dir included).
    let echoed = fs::read_to_string(out_dir.join("config.ini")).unwrap();
    assert_eq!(config::parse(&echoed).expect("reparse"), cfg);

    let rep = run(&["report", "--bundle", out_dir.to_str().unwrap()]);
    assert_eq!(code(&rep), 0, "stderr: {}", stderr(&rep));
    let svg = fs::read_to_string(out_dir.join("acc_curve.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn svg_rendering_is_deterministic() {
    let rows = vec![(1, 0.9_f64, 25.0_f64), (2, 0.5, 75.0), (3, 0.2, 100.0)];
    assert_eq!(plot::acc_curve_svg(&rows), plot::acc_curve_svg(&rows));
    let bars = vec![("CMA".to_string(), 97.5_f64), ("EF".to_string(), 85.0)];
    let svg = plot::bar_chart_svg("fusion", &bars);
    assert_eq!(svg, plot::bar_chart_svg("fusion", &bars));
    assert!(svg.starts_with("<svg"));
}

#[test]
fn help_lists_config_keys() {
    let out = run(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(text.contains("[fusion]"), "help: {text}");
    assert!(text.contains("width = 32"), "help: {text}");
}
