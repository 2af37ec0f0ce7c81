//! Parallel power sweeps with an on-disk point cache.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::pipeline::{run_point, ResultRecord};
use super::report::{Failure, SelectionRow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Overrides each config's power list.
    pub powers: Option<Vec<f64>>,
    /// Overrides each config's master seed.
    pub seeds: Option<Vec<u64>>,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
    /// No caching when `None`.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    pub records: Vec<ResultRecord>,
    pub selection: Vec<SelectionRow>,
    pub failures: Vec<Failure>,
    pub cache_hits: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CachedPoint {
    record: ResultRecord,
    selection: Vec<SelectionRow>,
}

/// Bumped whenever a code change alters simulated results, so older
/// cache entries stop matching.
pub const CACHE_REVISION: u32 = 1;

/// Cache key of one point.
pub fn point_key(cfg: &ExperimentConfig, power_dbm: f64, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(CACHE_REVISION.to_le_bytes());
    h.update(cfg.canonical_json().as_bytes());
    h.update(power_dbm.to_bits().to_le_bytes());
    h.update(seed.to_le_bytes());
    hex::encode(h.finalize())
}

fn cache_load(dir: &Path, key: &str) -> Option<CachedPoint> {
    let text = fs::read_to_string(dir.join(format!("{key}.json"))).ok()?;
    match serde_json::from_str(&text) {
        Ok(p) => Some(p),
        Err(e) => {
            log::warn!("ignoring unreadable cache entry {key}: {e}");
            None
        }
    }
}

fn cache_store(dir: &Path, key: &str, point: &CachedPoint) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    let json = serde_json::to_vec(point).map_err(|e| Error::Config(e.to_string()))?;
    tmp.write_all(&json)?;
    tmp.persist(dir.join(format!("{key}.json"))).map_err(|e| Error::Io(e.error.to_string()))?;
    Ok(())
}

fn compute(cfg: &ExperimentConfig, power: f64, seed: u64) -> Result<CachedPoint> {
    let out = run_point(cfg, power, seed)?;
    let r = &out.record;
    let selection = out
        .selection
        .map(|s| {
            (0..s.indices.len())
                .map(|f| SelectionRow {
                    config_hash: r.config_hash.clone(),
                    modulation: r.modulation.clone(),
                    power_dbm: power,
                    seed,
                    frame: f,
                    index: s.indices[f],
                    metric: s.selected_metrics[f],
                    baseline_metric: s.baseline_metrics[f],
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(CachedPoint { record: out.record, selection })
}

/// Run every (config, power, seed) point. Failed points are reported, not
/// fatal; invalid configurations are.
pub fn run_sweep(configs: &[ExperimentConfig], opts: &SweepOptions) -> Result<SweepOutput> {
    let mut jobs = Vec::new();
    for cfg in configs {
        cfg.validate()?;
        let powers = opts.powers.clone().unwrap_or_else(|| cfg.power_sweep_dbm.clone());
        let seeds = opts.seeds.clone().unwrap_or_else(|| vec![cfg.master_seed]);
        for &seed in &seeds {
            for &p in &powers {
                jobs.push((cfg, p, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let results: Vec<(Result<CachedPoint>, bool)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(cfg, p, seed)| {
                let key = point_key(cfg, p, seed);
                if let Some(dir) = &opts.cache_dir {
                    if let Some(mut hit) = cache_load(dir, &key) {
                        hit.record.wall_time_s = 0.0;
                        return (Ok(hit), true);
                    }
                }
                log::info!("{} at {p} dBm, seed {seed}", cfg.modulation.name());
                let res = compute(cfg, p, seed);
                if let (Ok(point), Some(dir)) = (&res, &opts.cache_dir) {
                    if let Err(e) = cache_store(dir, &key, point) {
                        log::warn!("cache write failed: {e}");
                    }
                }
                (res, false)
            })
            .collect()
    });
    let mut out = SweepOutput::default();
    for ((cfg, p, seed), (res, hit)) in jobs.into_iter().zip(results) {
        match res {
            Ok(point) => {
                out.cache_hits += hit as usize;
                out.records.push(point.record);
                out.selection.extend(point.selection);
            }
            Err(e) => {
                log::error!("{} at {p} dBm, seed {seed}: {e}", cfg.modulation.name());
                out.failures.push(Failure {
                    config_hash: cfg.hash(),
                    modulation: cfg.modulation.name().to_string(),
                    power_dbm: p,
                    seed,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::LinkConfig;
    use crate::experiment::Modulation;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(Modulation::U64qam);
        cfg.link = LinkConfig { n_spans: 1, ..Default::default() };
        cfg.forward.steps_per_span = 5;
        cfg.n_symbols = 1 << 11;
        cfg.power_sweep_dbm = vec![0.0, 2.0];
        cfg
    }

    #[test]
    fn keys_separate_points() {
        let c = tiny();
        assert_ne!(point_key(&c, 0.0, 1), point_key(&c, 0.0, 2));
        assert_ne!(point_key(&c, 0.0, 1), point_key(&c, 1.0, 1));
        assert_eq!(point_key(&c, 0.0, 1), point_key(&c.clone(), 0.0, 1));
    }

    #[test]
    fn second_run_hits_cache_with_identical_results() {
        let dir = tempfile::tempdir().unwrap();
        let opts = SweepOptions {
            jobs: 2,
            cache_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let a = run_sweep(&[tiny()], &opts).unwrap();
        assert_eq!((a.records.len(), a.cache_hits), (2, 0));
        let b = run_sweep(&[tiny()], &opts).unwrap();
        assert_eq!(b.cache_hits, 2);
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.se_bits_s_hz, y.se_bits_s_hz);
            assert_eq!(y.wall_time_s, 0.0);
        }
    }

    #[test]
    fn failing_point_is_recorded() {
        let opts = SweepOptions {
            powers: Some(vec![0.0, f64::INFINITY]),
            jobs: 1,
            ..Default::default()
        };
        let out = run_sweep(&[tiny()], &opts).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.failures.len(), 1);
    }
}
