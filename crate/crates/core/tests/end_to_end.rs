mod common;

use std::process::Command;

use fibernl::experiment::report::{Manifest, MANIFEST_FILE, RESULTS_FILE};
use fibernl::experiment::{read_results, CACHE_ENV};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fibernl"))
}

#[test]
fn mini_sweep_matches_golden_file() {
    let records = common::mini_records();
    assert_eq!(records.len(), 10);
    if let Some(diff) = common::golden_mismatch(&common::masked_csv(&records)) {
        panic!("results.csv drifted from the stored file: {diff}");
    }
}

#[test]
fn cli_run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = common::golden_dir().join("mini.toml");
    let run = |out: &std::path::Path| {
        bin()
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(out)
            .args(["--seed", "7", "--powers", "0:3:3", "--jobs", "1"])
            .env(CACHE_ENV, dir.path().join("cache"))
            .output()
            .unwrap()
    };
    let first = run(&out);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(String::from_utf8_lossy(&first.stdout).contains("peak SE"));
    let records = read_results(&out.join(RESULTS_FILE)).unwrap();
    assert_eq!(records.len(), 2);
    assert!(records.iter().all(|r| r.seed == 7 && r.wall_time_s > 0.0));

    let again = run(&dir.path().join("again"));
    assert!(again.status.success());
    let cached = read_results(&dir.path().join("again").join(RESULTS_FILE)).unwrap();
    assert!(cached.iter().all(|r| r.wall_time_s == 0.0));
    for (a, b) in records.iter().zip(&cached) {
        assert_eq!(a.se_bits_s_hz, b.se_bits_s_hz);
    }

    let rep = dir.path().join("rep");
    let status = bin().arg("report").arg("--in").arg(&out).arg("--out").arg(&rep).status().unwrap();
    assert!(status.success());
    for f in ["series_u64qam.csv", "peaks.csv", RESULTS_FILE, MANIFEST_FILE] {
        assert!(rep.join(f).exists(), "{f} missing");
    }
    let m: Manifest = serde_json::from_str(&std::fs::read_to_string(rep.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(m.schema_version, 1);
    assert_eq!(m.n_records, 2);
}

#[test]
fn cli_validate_reports_hash_and_rejects_bad_input() {
    let good = common::golden_dir().join("mini.toml");
    let ok = bin().arg("validate").arg("--config").arg(&good).output().unwrap();
    assert!(ok.status.success());
    let hash = common::mini_configs()[0].hash();
    assert!(String::from_utf8_lossy(&ok.stdout).contains(&hash));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "modulation = \"u64qam\"\n[link]\nn_spans = 0\n").unwrap();
    let res = bin().arg("validate").arg("--config").arg(&bad).output().unwrap();
    assert!(!res.status.success());

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "modulation = \"qpsk\"\n").unwrap();
    assert!(!bin().arg("validate").arg("--config").arg(&unknown).output().unwrap().status.success());
}
