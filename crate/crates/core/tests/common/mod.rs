#![allow(dead_code)]

use std::path::{Path, PathBuf};

use fibernl::experiment::{run_sweep, ExperimentConfig, Modulation, ResultRecord, SweepOptions};

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// The miniature configuration in every modulation.
pub fn mini_configs() -> Vec<ExperimentConfig> {
    let base = ExperimentConfig::load(&golden_dir().join("mini.toml")).expect("mini config");
    Modulation::ALL
        .iter()
        .map(|&m| ExperimentConfig { modulation: m, ..base.clone() })
        .collect()
}

pub fn mini_records() -> Vec<ResultRecord> {
    let out = run_sweep(&mini_configs(), &SweepOptions { jobs: 0, ..Default::default() }).expect("mini sweep");
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    out.records
}

/// results.csv text with the wall-time column blanked.
pub fn masked_csv(records: &[ResultRecord]) -> String {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.csv");
    fibernl::experiment::write_results(&path, records).unwrap();
    mask_wall_time(&std::fs::read_to_string(path).unwrap())
}

pub fn mask_wall_time(csv: &str) -> String {
    csv.lines()
        .enumerate()
        .map(|(i, l)| match (i, l.rsplit_once(',')) {
            (0, _) | (_, None) => l.to_string(),
            (_, Some((head, _))) => format!("{head},-"),
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

/// Compare against the stored file: text must match exactly.
pub fn golden_mismatch(actual: &str) -> Option<String> {
    let path = golden_dir().join("mini_results.csv");
    if std::env::var_os("FIBERNL_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_default();
    if expected == actual {
        return None;
    }
    let diff = expected
        .lines()
        .zip(actual.lines())
        .enumerate()
        .find(|(_, (a, b))| a != b)
        .map(|(i, (a, b))| format!("line {}: expected `{a}`, got `{b}`", i + 1))
        .unwrap_or_else(|| format!("{} vs {} lines", expected.lines().count(), actual.lines().count()));
    Some(diff)
}
