//! Compare CD compensation, SSFM backpropagation and trained ESSFM on a
//! shortened link.

use fibernl::dbp::{complexity_rm2d, DbpConfig};
use fibernl::experiment::pipeline::{equalize, propagate, transmit};
use fibernl::experiment::{ExperimentConfig, Modulation};
use fibernl::rxdsp::{effective_snr, mean_phase_remove};
use fibernl::signal::Symbols;

fn main() -> fibernl::Result<()> {
    let mut cfg = ExperimentConfig::new(Modulation::U64qam);
    cfg.link.n_spans = 10;
    cfg.n_symbols = 1 << 14;
    let power = 4.0;
    let seed = 3;

    let tx: Symbols = transmit(&cfg, power, seed)?.symbols;
    let rx = propagate(&cfg, &tx, power, seed)?;

    let engines = [
        ("cdc", DbpConfig::cdc()),
        ("ssfm 1/span", DbpConfig::ssfm(10)),
        ("ssfm 10/span", DbpConfig::ssfm(100)),
        ("essfm 1/span", DbpConfig { coeffs: Vec::new(), ..DbpConfig::essfm(10, 8) }),
    ];
    for (name, dbp) in engines {
        cfg.dbp = dbp;
        let (sym, used, _) = equalize(&cfg, &rx, &tx, power)?;
        let snr = effective_snr(&mean_phase_remove(&sym, &tx)?, &tx)?;
        println!("{name:<14} {snr:6.2} dB  {:7.0} RM/2D", complexity_rm2d(&used.with_tuned_blocks(&cfg.link, cfg.pulse.symbol_rate)).rm_per_2d);
    }
    Ok(())
}
