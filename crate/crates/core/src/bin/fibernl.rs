use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fibernl::experiment::report::{read_selection, Manifest, MANIFEST_FILE, RESULTS_FILE, SELECTION_FILE};
use fibernl::experiment::{cache_dir, emit_report, read_results, run_sweep, ExperimentConfig, SweepOptions, CACHE_ENV};

#[derive(Parser)]
#[command(version, about = "Coherent optical link simulation sweeps")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sweep launch power for one or more configurations.
    Run {
        #[arg(long, required = true, num_args = 1..)]
        config: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides master_seed; repeat or comma-separate for several seeds.
        #[arg(long, value_delimiter = ',')]
        seed: Vec<u64>,
        /// Comma list (`-2,0,2`) or range `start:step:stop`, in dBm.
        #[arg(long, allow_hyphen_values = true)]
        powers: Option<String>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Rebuild series, peaks and manifest from an existing results directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and check configurations without running them.
    Validate {
        #[arg(long, required = true, num_args = 1..)]
        config: Vec<PathBuf>,
    },
}

fn parse_powers(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("bad power '{t}': {e}"));
    if s.contains(':') {
        let parts: Vec<f64> = s.split(':').map(num).collect::<Result<_, _>>()?;
        let [start, step, stop] = parts[..] else {
            return Err("power range must be start:step:stop".into());
        };
        if !(step > 0.0) || stop < start {
            return Err("power range needs step > 0 and stop >= start".into());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| start + i as f64 * step).collect());
    }
    s.split(',').map(num).collect()
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<ExperimentConfig>, String> {
    paths
        .iter()
        .map(|p| ExperimentConfig::load(p).map_err(|e| format!("{}: {e}", p.display())))
        .collect()
}

fn run(config: &[PathBuf], out: &Path, seed: Vec<u64>, powers: Option<String>, jobs: usize) -> Result<(), String> {
    let configs = load_all(config)?;
    let powers = powers.as_deref().map(parse_powers).transpose()?;
    let opts = SweepOptions {
        powers,
        seeds: (!seed.is_empty()).then_some(seed),
        jobs,
        cache_dir: Some(cache_dir().unwrap_or_else(|| out.join(".cache"))),
    };
    let res = run_sweep(&configs, &opts).map_err(|e| e.to_string())?;
    if res.records.is_empty() && res.failures.is_empty() {
        log::warn!("empty power list: nothing simulated");
    }
    let manifest = Manifest::new(&configs, res.records.len(), res.failures.clone());
    let peaks = emit_report(out, &res.records, &res.selection, &manifest).map_err(|e| e.to_string())?;
    log::info!(
        "{} points ({} from cache), {} failed; results in {}",
        res.records.len(),
        res.cache_hits,
        res.failures.len(),
        out.display()
    );
    for p in peaks {
        println!(
            "{:<20} peak SE {:.4} bit/s/Hz at {:.2} dBm (grid {:.4} at {:.1} dBm), {:.0} RM/2D",
            p.modulation, p.refined_se_bits_s_hz, p.refined_power_dbm, p.se_bits_s_hz, p.power_dbm, p.rm_per_2d
        );
    }
    Ok(())
}

fn report(input: &Path, out: &Path) -> Result<(), String> {
    let records = read_results(&input.join(RESULTS_FILE)).map_err(|e| e.to_string())?;
    let sel_path = input.join(SELECTION_FILE);
    let selection = if sel_path.exists() {
        read_selection(&sel_path).map_err(|e| e.to_string())?
    } else {
        Vec::new()
    };
    let manifest = match std::fs::read_to_string(input.join(MANIFEST_FILE)) {
        Ok(text) => serde_json::from_str::<Manifest>(&text).map_err(|e| format!("manifest: {e}"))?,
        Err(_) => Manifest::new(&[], records.len(), Vec::new()),
    };
    let peaks = emit_report(out, &records, &selection, &manifest).map_err(|e| e.to_string())?;
    println!("{} records, {} series peaks written to {}", records.len(), peaks.len(), out.display());
    Ok(())
}

fn validate(config: &[PathBuf]) -> Result<(), String> {
    for (path, cfg) in config.iter().zip(load_all(config)?) {
        cfg.validate().map_err(|e| format!("{}: {e}", path.display()))?;
        println!(
            "{}: ok  hash {}  {}  {} powers  {} symbols",
            path.display(),
            cfg.hash(),
            cfg.modulation.name(),
            cfg.power_sweep_dbm.len(),
            cfg.n_symbols
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run { config, out, seed, powers, jobs } => run(&config, &out, seed, powers, jobs),
        Cmd::Report { input, out } => report(&input, &out),
        Cmd::Validate { config } => validate(&config),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.contains("cache") {
                eprintln!("(cache directory is set by {CACHE_ENV})");
            }
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::parse_powers;

    #[test]
    fn power_lists() {
        assert_eq!(parse_powers("-4:1:-1").unwrap(), vec![-4.0, -3.0, -2.0, -1.0]);
        assert_eq!(parse_powers("0,2.5").unwrap(), vec![0.0, 2.5]);
        assert!(parse_powers("").unwrap().is_empty());
        assert!(parse_powers("1:0:3").is_err());
        assert!(parse_powers("a").is_err());
    }
}
