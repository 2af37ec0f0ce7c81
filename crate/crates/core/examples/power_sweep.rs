//! Launch-power sweep of uniform and shaped 64QAM on a short link, with
//! the same CSV/JSON report the command-line tool writes.

use fibernl::experiment::report::Manifest;
use fibernl::experiment::{emit_report, run_sweep, ExperimentConfig, Modulation, SweepOptions};

fn main() -> fibernl::Result<()> {
    let configs: Vec<ExperimentConfig> = [Modulation::U64qam, Modulation::PasEss]
        .into_iter()
        .map(|m| {
            let mut c = ExperimentConfig::new(m);
            c.link.n_spans = 5;
            c.forward.steps_per_span = 40;
            c.n_symbols = 1 << 13;
            c.power_sweep_dbm = vec![-2.0, 0.0, 2.0, 4.0, 6.0, 8.0];
            c
        })
        .collect();
    let opts = SweepOptions { seeds: Some(vec![1, 2]), ..SweepOptions::default() };
    let res = run_sweep(&configs, &opts)?;

    let out = std::env::temp_dir().join("fibernl-power-sweep");
    let manifest = Manifest::new(&configs, res.records.len(), res.failures.clone());
    let peaks = emit_report(&out, &res.records, &res.selection, &manifest)?;
    for r in &res.records {
        println!("{:<8} {:5.1} dBm seed {}  SE {:.3}  SNR {:.2} dB", r.modulation, r.power_dbm, r.seed, r.se_bits_s_hz, r.effective_snr_db);
    }
    for p in peaks {
        println!("{}: peak {:.3} bit/s/Hz near {:.2} dBm", p.modulation, p.refined_se_bits_s_hz, p.refined_power_dbm);
    }
    println!("report in {}", out.display());
    println!("\n{}", configs[1].to_toml()?);
    Ok(())
}
