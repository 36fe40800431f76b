//! Drives the `gesedd` binary end to end on small compact-scale configs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use gesedd_core::aic::read_matrix_le;
use gesedd_core::model::PowerRatio;
use gesedd_harness::config::{Profile, RunConfig};
use gesedd_harness::emit::{read_csv, COLUMNS};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gesedd-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn gesedd(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_gesedd"))
        .args(args)
        .env("RUST_BACKTRACE", "0")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "gesedd {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let mut cfg = RunConfig::for_profile(Profile::Compact);
    cfg.scene.k_tau = 3;
    cfg.sweep.trials = 4;
    cfg.sweep.snr_db = vec![PowerRatio::Db(10.0), PowerRatio::Db(30.0)];
    let path = dir.join("small.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    path
}

#[test]
fn emit_config_round_trips() {
    let text = gesedd(&[
        "--profile",
        "compact",
        "--seed",
        "17",
        "--method",
        "gesedd2",
        "emit-config",
    ]);
    let cfg = RunConfig::from_toml(&text).unwrap();
    assert_eq!(cfg.seed, 17);
    assert_eq!(cfg.to_toml(), text);
    let p = cfg.params().unwrap();
    assert_eq!((p.n(), p.measurements(), p.pulses()), (256, 64, 32));
}

#[test]
fn sweep_snr_csv_matches_across_execution_modes() {
    let dir = scratch("snr");
    let cfg = small_config(&dir);
    let out = dir.join("out");
    let args = [
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--sequential",
        "sweep-snr",
    ];
    gesedd(&args);
    let csv_path = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "csv"))
        .unwrap();
    let text = fs::read_to_string(&csv_path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    let comment = lines.next().unwrap();
    let hash = RunConfig::load(&cfg, Profile::Desk).unwrap().hash();
    assert!(comment.starts_with('#') && comment.contains(&format!("config_hash={hash}")));
    assert!(comment.contains("pooling"));
    assert_eq!(lines.next().unwrap(), COLUMNS.join(","));
    let rows = read_csv(text.as_bytes()).unwrap();
    assert_eq!(
        rows.iter().map(|r| r.sweep_value).collect::<Vec<_>>(),
        vec![10.0, 30.0]
    );
    assert!(rows
        .iter()
        .all(|r| r.trials == 4 && (0.0..=1.0).contains(&r.success_rate)));
    assert!(csv_path.with_extension("svg").exists());

    let again = dir.join("again");
    gesedd(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
        "sweep-snr",
    ]);
    assert_eq!(
        fs::read(again.join(csv_path.file_name().unwrap())).unwrap(),
        text.as_bytes()
    );
}

#[test]
fn run_once_record_and_matrix_dump() {
    let dir = scratch("once");
    let cfg = small_config(&dir);
    gesedd(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
        "run-once",
        "--dump-matrix",
    ]);
    let record = fs::read_to_string(dir.join("run_once.txt")).unwrap();
    assert!(record.starts_with("config_hash="));
    assert!(record.contains("truth=3"));
    for name in ["eigenvalues.csv", "roots.csv", "spectrum.csv"] {
        assert!(dir.join(name).exists(), "{name}");
    }
    let bytes = fs::read(dir.join("matrix.bin")).unwrap();
    assert_eq!(bytes.len(), 64 * 256 * 16);
    let m = read_matrix_le(64, 256, bytes.as_slice()).unwrap();
    assert!(m
        .as_slice()
        .iter()
        .all(|z| z.re.is_finite() && z.im.is_finite()));
    assert!(m.frobenius_norm() > 0.0);
}
