//! Symbol-rate receiver processing: phase recovery, SNR and achievable
//! information rate estimation, and spectral efficiency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{entropy_bits, Constellation, Symbols, C64};

/// Effective SNR reported for a noiseless match.
pub const SNR_CAP_DB: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CprConfig {
    pub window_symbols: usize,
    pub test_phases: usize,
    /// Rotational symmetry order of the constellation.
    pub symmetry: usize,
}

impl Default for CprConfig {
    fn default() -> Self {
        CprConfig {
            window_symbols: 481,
            test_phases: 64,
            symmetry: 4,
        }
    }
}

impl CprConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_symbols % 2 == 0 {
            return Err(Error::param("window_symbols", "must be odd"));
        }
        if self.test_phases < 2 {
            return Err(Error::param("test_phases", "need at least 2"));
        }
        if self.symmetry == 0 {
            return Err(Error::param("symmetry", "must be positive"));
        }
        Ok(())
    }

    /// Angular range searched, `2 pi / symmetry`.
    pub fn range(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.symmetry as f64
    }
}

fn check_aligned(rx: &Symbols, tx: &Symbols) -> Result<()> {
    if rx.len() != tx.len() {
        return Err(Error::LengthMismatch {
            what: "rx symbols",
            expected: tx.len(),
            got: rx.len(),
        });
    }
    if rx.is_empty() {
        return Err(Error::EmptyInput("symbols"));
    }
    Ok(())
}

fn rotate(v: &[C64], r: C64) -> Vec<C64> {
    v.iter().map(|s| s * r).collect()
}

/// Rotate each polarization by `exp(-j arg sum rx conj(tx))`.
pub fn mean_phase_remove(rx: &Symbols, tx: &Symbols) -> Result<Symbols> {
    check_aligned(rx, tx)?;
    let mut out = Vec::with_capacity(2);
    for (r, t) in [(&rx.x, &tx.x), (&rx.y, &tx.y)] {
        let c: C64 = r.iter().zip(t).map(|(a, b)| a * b.conj()).sum();
        if c.norm() == 0.0 {
            return Err(Error::ZeroEnergy);
        }
        out.push(rotate(r, (c / c.norm()).conj()));
    }
    let y = out.pop().expect("y");
    let x = out.pop().expect("x");
    Symbols::new(x, y)
}

/// Scale both polarizations by the real least-squares gain onto `tx`.
pub fn normalize_gain(rx: &Symbols, tx: &Symbols) -> Result<Symbols> {
    check_aligned(rx, tx)?;
    let num: f64 = rx
        .x
        .iter()
        .zip(&tx.x)
        .chain(rx.y.iter().zip(&tx.y))
        .map(|(a, b)| (a * b.conj()).re)
        .sum();
    if num <= 0.0 {
        return Err(Error::ZeroEnergy);
    }
    Ok(rx.scaled(tx.energy() / num))
}

/// Blind phase search over `test_phases` phases in `[0, 2 pi / symmetry)`
/// with a centered window (truncated at the sequence edges), both
/// polarizations sharing one phase. The per-symbol estimates are unwrapped
/// across the symmetry ambiguity; the returned track is the rotation that
/// was removed.
pub fn bps_cpr(rx: &Symbols, constellation: &Constellation, cfg: &CprConfig) -> Result<(Symbols, Vec<f64>)> {
    cfg.validate()?;
    let n = rx.len();
    if cfg.window_symbols > n {
        return Err(Error::param("window_symbols", format!("{} exceeds the {n} symbols", cfg.window_symbols)));
    }
    let b = cfg.test_phases;
    let range = cfg.range();
    let phases: Vec<f64> = (0..b).map(|i| range * i as f64 / b as f64).collect();
    // prefix sums of the distance metric per test phase
    let mut prefix = vec![vec![0.0; n + 1]; b];
    for (p, &ph) in prefix.iter_mut().zip(&phases) {
        let r = C64::from_polar(1.0, -ph);
        let mut acc = 0.0;
        for k in 0..n {
            let (xr, yr) = (rx.x[k] * r, rx.y[k] * r);
            acc += (xr - constellation.nearest(xr)).norm_sqr() + (yr - constellation.nearest(yr)).norm_sqr();
            p[k + 1] = acc;
        }
    }
    let half = cfg.window_symbols / 2;
    let mut track = Vec::with_capacity(n);
    let mut prev: Option<f64> = None;
    for k in 0..n {
        let lo = k.saturating_sub(half);
        let hi = (k + half + 1).min(n);
        let best = (0..b)
            .min_by(|&i, &j| (prefix[i][hi] - prefix[i][lo]).total_cmp(&(prefix[j][hi] - prefix[j][lo])))
            .expect("phases");
        let mut ph = phases[best];
        if let Some(p) = prev {
            ph += range * ((p - ph) / range).round();
        }
        prev = Some(ph);
        track.push(ph);
    }
    let x = rx.x.iter().zip(&track).map(|(v, p)| v * C64::from_polar(1.0, -p)).collect();
    let y = rx.y.iter().zip(&track).map(|(v, p)| v * C64::from_polar(1.0, -p)).collect();
    Ok((Symbols::new(x, y)?, track))
}

/// `10 log10(E|x|^2 / E|y - x|^2)` after mean-phase removal, capped.
pub fn effective_snr(rx: &Symbols, tx: &Symbols) -> Result<f64> {
    let r = mean_phase_remove(rx, tx)?;
    let sig = tx.energy();
    if sig == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let err: f64 = r
        .x
        .iter()
        .zip(&tx.x)
        .chain(r.y.iter().zip(&tx.y))
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok((10.0 * (sig / err).log10()).min(SNR_CAP_DB))
}

/// Rate bookkeeping applied to an AIR estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateAccounting {
    /// Information bits per 4D symbol delivered by the shaper.
    pub gross_bits_per_4d: f64,
    /// Prior entropy minus matcher rate, per 4D symbol.
    pub dm_loss_bits_per_4d: f64,
    pub selection_loss_bits_per_4d: f64,
    pub symbol_rate: f64,
    pub channel_spacing: f64,
}

impl RateAccounting {
    /// Uniform signalling with no shaping or selection losses.
    pub fn uniform(bits_per_4d: f64, symbol_rate: f64, channel_spacing: f64) -> Self {
        RateAccounting {
            gross_bits_per_4d: bits_per_4d,
            dm_loss_bits_per_4d: 0.0,
            selection_loss_bits_per_4d: 0.0,
            symbol_rate,
            channel_spacing,
        }
    }

    /// Net 4D rate for a measured AIR: the AIR minus the matcher and
    /// selection losses, never above the information rate sent.
    pub fn net_rate(&self, air_4d: f64) -> f64 {
        let ceiling = self.gross_bits_per_4d - self.selection_loss_bits_per_4d;
        (air_4d - self.dm_loss_bits_per_4d - self.selection_loss_bits_per_4d)
            .min(ceiling)
            .max(0.0)
    }

    pub fn se(&self, net_4d: f64) -> f64 {
        net_4d * self.symbol_rate / self.channel_spacing
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirReport {
    pub air_bits_per_2d: f64,
    pub air_bits_per_4d: f64,
    pub effective_snr_db: f64,
    pub net_rate_bits_per_4d: f64,
    pub se_bits_s_hz: f64,
    /// Auxiliary-channel variance per 2D symbol.
    pub noise_var: f64,
}

/// Symbol-metric AIR with the Gaussian auxiliary channel
/// `q(y|x) = exp(-|y-x|^2 / s2) / (pi s2)`; `s2` is fitted to maximize the
/// estimate unless given. `rx` must be on the scale of `tx`.
pub fn air_estimate(
    rx: &Symbols,
    tx: &Symbols,
    constellation: &Constellation,
    noise_var: Option<f64>,
    accounting: &RateAccounting,
) -> Result<AirReport> {
    check_aligned(rx, tx)?;
    let total: f64 = constellation.priors.iter().sum();
    if !((total - 1.0).abs() < 1e-9) || constellation.priors.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::param("priors", "must be a probability distribution"));
    }
    let ys: Vec<C64> = rx.x.iter().chain(&rx.y).copied().collect();
    let xs: Vec<C64> = tx.x.iter().chain(&tx.y).copied().collect();
    let air = |s2: f64| air_2d(&ys, &xs, constellation, s2);
    let s2 = match noise_var {
        Some(v) if v > 0.0 => v,
        Some(_) => return Err(Error::param("noise_var", "must be positive")),
        None => fit_noise_var(&ys, &xs, &air),
    };
    let a2 = air(s2);
    let a4 = 2.0 * a2;
    let net = accounting.net_rate(a4);
    Ok(AirReport {
        air_bits_per_2d: a2,
        air_bits_per_4d: a4,
        effective_snr_db: effective_snr(rx, tx)?,
        net_rate_bits_per_4d: net,
        se_bits_s_hz: accounting.se(net),
        noise_var: s2,
    })
}

fn fit_noise_var(ys: &[C64], xs: &[C64], air: &dyn Fn(f64) -> f64) -> f64 {
    let mse = ys.iter().zip(xs).map(|(y, x)| (y - x).norm_sqr()).sum::<f64>() / ys.len() as f64;
    let s0 = mse.max(1e-12);
    // log-spaced grid then golden section in log s2
    let grid: Vec<f64> = (-8..=8).map(|i| s0.ln() + i as f64 * 0.125).collect();
    let vals: Vec<f64> = grid.iter().map(|l| air(l.exp())).collect();
    let best = (0..grid.len()).max_by(|&i, &j| vals[i].total_cmp(&vals[j])).expect("grid");
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (air(c.exp()), air(d.exp()));
    for _ in 0..40 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = air(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = air(d.exp());
        }
        if (b - a).abs() < 1e-6 {
            break;
        }
    }
    let (l, f) = if fc > fd { (c, fc) } else { (d, fd) };
    if f >= vals[best] {
        l.exp()
    } else {
        grid[best].exp()
    }
}

/// Mean of `log2 q(y|x) / sum_x' P(x') q(y|x')` over the samples.
fn air_2d(ys: &[C64], xs: &[C64], c: &Constellation, s2: f64) -> f64 {
    let inv = 1.0 / s2;
    let sum: f64 = match &c.grid {
        Some(g) => ys
            .iter()
            .zip(xs)
            .map(|(y, x)| {
                let d = (y - x).norm_sqr() * inv;
                -d - log_mix_axis(y.re, &g.levels, &g.probs, inv) - log_mix_axis(y.im, &g.levels, &g.probs, inv)
            })
            .sum(),
        None => ys
            .iter()
            .zip(xs)
            .map(|(y, x)| {
                let d = (y - x).norm_sqr() * inv;
                let dmin = c.points.iter().map(|p| (y - p).norm_sqr() * inv).fold(f64::INFINITY, f64::min);
                let mix: f64 = c
                    .points
                    .iter()
                    .zip(&c.priors)
                    .map(|(p, w)| w * (dmin - (y - p).norm_sqr() * inv).exp())
                    .sum();
                -d + dmin - mix.ln()
            })
            .sum(),
    };
    sum / ys.len() as f64 * std::f64::consts::LOG2_E
}

/// `ln sum_l P(l) exp(-(v - l)^2 inv)`, shifted for stability.
fn log_mix_axis(v: f64, levels: &[f64], probs: &[f64], inv: f64) -> f64 {
    let dmin = levels.iter().map(|l| (v - l) * (v - l) * inv).fold(f64::INFINITY, f64::min);
    let s: f64 = levels
        .iter()
        .zip(probs)
        .map(|(l, p)| p * (dmin - (v - l) * (v - l) * inv).exp())
        .sum();
    s.ln() - dmin
}

/// Amplitude-prior entropy minus matcher rate, per 4D symbol.
pub fn dm_rate_loss(amplitude_pmf: &[f64], rate_per_amplitude: f64) -> f64 {
    (4.0 * (entropy_bits(amplitude_pmf) - rate_per_amplitude)).max(0.0)
}
