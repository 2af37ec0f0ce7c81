//! Result files: results table, per-modulation series, peaks, manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::pipeline::ResultRecord;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const RESULTS_FILE: &str = "results.csv";
pub const PEAKS_FILE: &str = "peaks.csv";
pub const SELECTION_FILE: &str = "selection.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Per-frame selection diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub config_hash: String,
    pub modulation: String,
    pub power_dbm: f64,
    pub seed: u64,
    pub frame: usize,
    pub index: usize,
    pub metric: f64,
    pub baseline_metric: f64,
}

/// A point that could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub config_hash: String,
    pub modulation: String,
    pub power_dbm: f64,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub crate_version: String,
    pub configs: BTreeMap<String, serde_json::Value>,
    pub n_records: usize,
    pub failures: Vec<Failure>,
}

impl Manifest {
    pub fn new(configs: &[ExperimentConfig], n_records: usize, failures: Vec<Failure>) -> Self {
        let configs = configs
            .iter()
            .map(|c| (c.hash(), serde_json::to_value(c).expect("config serializes")))
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            configs,
            n_records,
            failures,
        }
    }
}

/// Maximum of a sampled curve, with a parabola through the best point and
/// its neighbours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub config_hash: String,
    pub modulation: String,
    pub power_dbm: f64,
    pub se_bits_s_hz: f64,
    pub refined_power_dbm: f64,
    pub refined_se_bits_s_hz: f64,
    pub rm_per_2d: f64,
}

/// Averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub config_hash: String,
    pub power_dbm: f64,
    pub n_seeds: usize,
    pub se_bits_s_hz: f64,
    pub air_4d: f64,
    pub effective_snr_db: f64,
    pub rm_per_2d: f64,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_path(path).map_err(csv_err)?;
    if rows.is_empty() {
        w.write_record(header).map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

const RESULT_COLUMNS: [&str; 9] = [
    "config_hash",
    "modulation",
    "power_dbm",
    "seed",
    "se_bits_s_hz",
    "air_4d",
    "effective_snr_db",
    "rm_per_2d",
    "wall_time_s",
];

pub fn write_results(path: &Path, records: &[ResultRecord]) -> Result<()> {
    write_csv(path, records, &RESULT_COLUMNS)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>> {
    read_csv(path)
}

pub fn read_selection(path: &Path) -> Result<Vec<SelectionRow>> {
    read_csv(path)
}

/// Seed-averaged curves keyed by config hash, in ascending power.
pub fn series(records: &[ResultRecord]) -> BTreeMap<String, Vec<SeriesPoint>> {
    let mut acc: BTreeMap<(String, i64), Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.config_hash.clone(), (r.power_dbm * 1e6).round() as i64);
        acc.entry(key).or_default().push(r);
    }
    let mut out: BTreeMap<String, Vec<SeriesPoint>> = BTreeMap::new();
    for ((hash, _), rs) in acc {
        let n = rs.len() as f64;
        let mean = |f: fn(&ResultRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
        out.entry(hash.clone()).or_default().push(SeriesPoint {
            config_hash: hash,
            power_dbm: rs[0].power_dbm,
            n_seeds: rs.len(),
            se_bits_s_hz: mean(|r| r.se_bits_s_hz),
            air_4d: mean(|r| r.air_4d),
            effective_snr_db: mean(|r| r.effective_snr_db),
            rm_per_2d: mean(|r| r.rm_per_2d),
        });
    }
    out
}

/// Vertex of the parabola through three points, or the middle point when
/// the three are collinear or the parabola opens upwards.
pub fn parabolic_vertex(p: [(f64, f64); 3]) -> (f64, f64) {
    let [(x0, y0), (x1, y1), (x2, y2)] = p;
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let a = (d12 - d01) / (x2 - x0);
    if !(a < 0.0) {
        return (x1, y1);
    }
    let b = d01 - a * (x0 + x1);
    let c = y0 - a * x0 * x0 - b * x0;
    let xv = (-b / (2.0 * a)).clamp(x0, x2);
    (xv, a * xv * xv + b * xv + c)
}

/// Best point of a curve sorted by power, refined when it is interior.
pub fn peak_se(curve: &[SeriesPoint], modulation: &str) -> Option<Peak> {
    let (i, best) = curve
        .iter()
        .enumerate()
        .filter(|(_, p)| p.se_bits_s_hz.is_finite())
        .max_by(|a, b| a.1.se_bits_s_hz.total_cmp(&b.1.se_bits_s_hz))?;
    let (rp, rse) = if i > 0 && i + 1 < curve.len() {
        let pt = |j: usize| (curve[j].power_dbm, curve[j].se_bits_s_hz);
        parabolic_vertex([pt(i - 1), pt(i), pt(i + 1)])
    } else {
        (best.power_dbm, best.se_bits_s_hz)
    };
    Some(Peak {
        config_hash: best.config_hash.clone(),
        modulation: modulation.to_string(),
        power_dbm: best.power_dbm,
        se_bits_s_hz: best.se_bits_s_hz,
        refined_power_dbm: rp,
        refined_se_bits_s_hz: rse.max(best.se_bits_s_hz),
        rm_per_2d: best.rm_per_2d,
    })
}

/// True when the sequence rises then falls, ignoring wiggles up to `tol`.
pub fn is_unimodal(values: &[f64], tol: f64) -> bool {
    let Some(peak) = values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i) else {
        return true;
    };
    let rising = values[..=peak].windows(2).all(|w| w[1] >= w[0] - tol);
    let falling = values[peak..].windows(2).all(|w| w[1] <= w[0] + tol);
    rising && falling
}

/// Write results, series, peaks, selection diagnostics and the manifest.
pub fn emit_report(out: &Path, records: &[ResultRecord], selection: &[SelectionRow], manifest: &Manifest) -> Result<Vec<Peak>> {
    fs::create_dir_all(out)?;
    let mut records = records.to_vec();
    records.sort_by(|a, b| {
        (a.modulation.as_str(), a.config_hash.as_str(), a.seed)
            .cmp(&(b.modulation.as_str(), b.config_hash.as_str(), b.seed))
            .then(a.power_dbm.total_cmp(&b.power_dbm))
    });
    write_results(&out.join(RESULTS_FILE), &records)?;

    let names: BTreeMap<&str, &str> = records.iter().map(|r| (r.config_hash.as_str(), r.modulation.as_str())).collect();
    let curves = series(&records);
    let mut by_mod: BTreeMap<&str, Vec<SeriesPoint>> = BTreeMap::new();
    let mut peaks = Vec::new();
    for (hash, curve) in &curves {
        let m = names[hash.as_str()];
        by_mod.entry(m).or_default().extend(curve.iter().cloned());
        if let Some(p) = peak_se(curve, m) {
            if !is_unimodal(&curve.iter().map(|p| p.se_bits_s_hz).collect::<Vec<_>>(), 0.05) {
                log::warn!("{m} ({hash}): SE versus power is not unimodal");
            }
            peaks.push(p);
        }
    }
    for (m, pts) in &by_mod {
        write_csv(&out.join(format!("series_{m}.csv")), pts, &[])?;
    }
    write_csv(
        &out.join(PEAKS_FILE),
        &peaks,
        &["config_hash", "modulation", "power_dbm", "se_bits_s_hz", "refined_power_dbm", "refined_se_bits_s_hz", "rm_per_2d"],
    )?;
    if !selection.is_empty() {
        write_csv(&out.join(SELECTION_FILE), selection, &[])?;
    }
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(out.join(MANIFEST_FILE), json)?;
    Ok(peaks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(hash: &str, p: f64, se: f64, seed: u64) -> ResultRecord {
        ResultRecord {
            config_hash: hash.into(),
            modulation: "u64qam".into(),
            power_dbm: p,
            seed,
            se_bits_s_hz: se,
            air_4d: se,
            effective_snr_db: 10.0,
            rm_per_2d: 5.0,
            wall_time_s: 0.5,
        }
    }

    #[test]
    fn vertex_of_exact_parabola() {
        let f = |x: f64| -0.5 * (x - 1.3) * (x - 1.3) + 7.0;
        let (x, y) = parabolic_vertex([(0.0, f(0.0)), (1.0, f(1.0)), (3.0, f(3.0))]);
        assert!((x - 1.3).abs() < 1e-12 && (y - 7.0).abs() < 1e-12);
        assert_eq!(parabolic_vertex([(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]), (1.0, 2.0));
    }

    #[test]
    fn unimodality() {
        assert!(is_unimodal(&[1.0, 2.0, 3.0, 2.5, 1.0], 0.0));
        assert!(is_unimodal(&[1.0, 2.0, 2.0], 0.0));
        assert!(!is_unimodal(&[1.0, 3.0, 2.0, 3.5, 1.0], 0.0));
        assert!(is_unimodal(&[1.0, 3.0, 2.99, 3.5, 1.0], 0.02));
    }

    #[test]
    fn results_roundtrip_and_column_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(RESULTS_FILE);
        let rs = vec![rec("a", 0.0, 1.0, 1), rec("a", 1.0, 2.0, 1)];
        write_results(&path, &rs).unwrap();
        let header = fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, RESULT_COLUMNS.join(","));
        assert_eq!(read_results(&path).unwrap(), rs);
        write_results(&path, &[]).unwrap();
        assert!(read_results(&path).unwrap().is_empty());
    }

    #[test]
    fn series_average_seeds_and_peak_refines() {
        let rs = vec![
            rec("a", 0.0, 1.0, 1),
            rec("a", 0.0, 3.0, 2),
            rec("a", 1.0, 4.0, 1),
            rec("a", 2.0, 3.0, 1),
        ];
        let s = series(&rs);
        let c = &s["a"];
        assert_eq!(c.len(), 3);
        assert_eq!((c[0].n_seeds, c[0].se_bits_s_hz), (2, 2.0));
        let p = peak_se(c, "u64qam").unwrap();
        assert_eq!(p.power_dbm, 1.0);
        assert!(p.refined_se_bits_s_hz >= 4.0 && p.refined_power_dbm > 0.0 && p.refined_power_dbm < 2.0);
    }

    #[test]
    fn emit_writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let rs = vec![rec("a", 0.0, 1.0, 1), rec("a", 1.0, 2.0, 1)];
        let m = Manifest::new(&[], rs.len(), vec![]);
        let peaks = emit_report(dir.path(), &rs, &[], &m).unwrap();
        assert_eq!(peaks.len(), 1);
        for f in [RESULTS_FILE, PEAKS_FILE, MANIFEST_FILE, "series_u64qam.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let back: Manifest = serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(back.schema_version, SCHEMA_VERSION);
    }
}
