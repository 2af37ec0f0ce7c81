//! Blind phase search on 64QAM with Wiener laser phase noise, followed by
//! the AIR of the recovered symbols.

use fibernl::channel::{awgn_symbols, phase_noise_track};
use fibernl::rng::{self, Role};
use fibernl::rxdsp::{air_estimate, bps_cpr, mean_phase_remove, CprConfig, RateAccounting};
use fibernl::signal::{Constellation, Symbols, C64};
use rand::Rng;

fn main() -> fibernl::Result<()> {
    let c = Constellation::uniform_qam(64)?;
    let n = 1 << 15;
    let mut r = rng::stream(9, Role::Bits, 0);
    let mut pick = || c.points[r.random_range(0..64)];
    let tx = Symbols::new((0..n).map(|_| pick()).collect(), (0..n).map(|_| pick()).collect())?;
    let acc = RateAccounting::uniform(12.0, 46.5e9, 50e9);

    for linewidth in [0.0, 100e3, 500e3] {
        let theta = phase_noise_track(n, 2.0 * linewidth, 46.5e9, 11);
        let noisy = awgn_symbols(&tx, 17.0, 12)?;
        let rot = |v: &[C64]| -> Vec<C64> { v.iter().zip(&theta).map(|(s, t)| s * C64::from_polar(1.0, *t)).collect() };
        let rx = Symbols::new(rot(&noisy.x), rot(&noisy.y))?;

        let (bps, est) = bps_cpr(&rx, &c, &CprConfig::default())?;
        let bps = mean_phase_remove(&bps, &tx)?;
        let d: Vec<f64> = est.iter().zip(&theta).map(|(e, t)| e - t).collect();
        let m = d.iter().sum::<f64>() / n as f64;
        let rms = (d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
        let plain = air_estimate(&mean_phase_remove(&rx, &tx)?, &tx, &c, None, &acc)?;
        let rec = air_estimate(&bps, &tx, &c, None, &acc)?;
        println!(
            "{:>4.0} kHz: no CPR {:.3} bit/4D, BPS {:.3} bit/4D ({:.2} dB), track error {:.3} rad rms",
            linewidth / 1e3,
            plain.air_bits_per_4d,
            rec.air_bits_per_4d,
            rec.effective_snr_db,
            rms
        );
    }
    Ok(())
}
