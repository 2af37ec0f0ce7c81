//! Waveform primitives: dual-polarization containers, QAM constellations,
//! root-raised-cosine shaping and matched filtering, WDM multiplexing and
//! launch-power control.
//!
//! Everything here works on cyclic blocks. Pulse shaping, filtering and
//! frequency shifts are done on the DFT grid, so a block of `N` symbols
//! at `sps` samples per symbol is an exactly periodic waveform and every
//! operation has an exact inverse on band-limited input.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;

pub type C64 = Complex64;

/// A sequence of 4D symbols: one complex symbol per polarization per
/// symbol interval.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Symbols {
    pub x: Vec<C64>,
    pub y: Vec<C64>,
}

impl Symbols {
    pub fn new(x: Vec<C64>, y: Vec<C64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                what: "polarization Y",
                expected: x.len(),
                got: y.len(),
            });
        }
        Ok(Symbols { x, y })
    }

    pub fn zeros(n: usize) -> Self {
        Symbols {
            x: vec![C64::new(0.0, 0.0); n],
            y: vec![C64::new(0.0, 0.0); n],
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Total energy over both polarizations.
    pub fn energy(&self) -> f64 {
        energy(&self.x) + energy(&self.y)
    }

    /// Mean energy per complex (2D) symbol, averaged over both polarizations.
    pub fn mean_energy_2d(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.energy() / (2 * self.len()) as f64
    }

    /// Energy of each 4D symbol.
    pub fn energies_4d(&self) -> Vec<f64> {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .collect()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Symbols {
        Symbols {
            x: self.x[range.clone()].to_vec(),
            y: self.y[range].to_vec(),
        }
    }

    pub fn extend_from(&mut self, other: &Symbols) {
        self.x.extend_from_slice(&other.x);
        self.y.extend_from_slice(&other.y);
    }

    pub fn concat(parts: &[&Symbols]) -> Symbols {
        let mut out = Symbols::default();
        for p in parts {
            out.extend_from(p);
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Symbols {
        Symbols {
            x: self.x.iter().map(|v| v * s).collect(),
            y: self.y.iter().map(|v| v * s).collect(),
        }
    }
}

/// Dual-polarization complex baseband waveform.
///
/// Field amplitudes are in W^1/2, so `|x|^2 + |y|^2` is instantaneous power
/// in watts. `center_offset` is the carrier offset of this waveform relative
/// to the simulation center frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub x: Vec<C64>,
    pub y: Vec<C64>,
    pub sample_rate: f64,
    pub center_offset: f64,
}

impl Signal {
    pub fn new(x: Vec<C64>, y: Vec<C64>, sample_rate: f64) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::EmptyInput("signal samples"));
        }
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                what: "polarization Y",
                expected: x.len(),
                got: y.len(),
            });
        }
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::param("sample_rate", "must be positive"));
        }
        Ok(Signal {
            x,
            y,
            sample_rate,
            center_offset: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub fn energy(&self) -> f64 {
        energy(&self.x) + energy(&self.y)
    }

    /// Mean total power of both polarizations, in W.
    pub fn mean_power(&self) -> f64 {
        self.energy() / self.len() as f64
    }

    pub fn mean_power_dbm(&self) -> f64 {
        watts_to_dbm(self.mean_power())
    }

    /// Joint instantaneous power `|x|^2 + |y|^2`.
    pub fn power_profile(&self) -> Vec<f64> {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .collect()
    }

    pub fn scale(&mut self, s: f64) {
        self.x.iter_mut().for_each(|v| *v *= s);
        self.y.iter_mut().for_each(|v| *v *= s);
    }

    /// Cyclic delay by `n` samples (negative advances).
    pub fn circular_shift(&self, n: isize) -> Signal {
        let len = self.len() as isize;
        let k = n.rem_euclid(len) as usize;
        let mut out = self.clone();
        out.x.rotate_right(k);
        out.y.rotate_right(k);
        out
    }

    /// Both polarizations transformed to the frequency domain.
    pub fn spectrum(&self) -> (Vec<C64>, Vec<C64>) {
        (fft::fft(&self.x), fft::fft(&self.y))
    }

    /// Power spectrum `|X|^2 + |Y|^2` per DFT bin (unnormalized).
    pub fn power_spectrum(&self) -> Vec<f64> {
        let (sx, sy) = self.spectrum();
        sx.iter().zip(&sy).map(|(a, b)| a.norm_sqr() + b.norm_sqr()).collect()
    }
}

pub fn energy(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

/// Normalized mean squared error of `a` against reference `b`, both
/// polarizations pooled.
pub fn nmse(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(p, q)| (p - q).norm_sqr()).sum();
    num / energy(b)
}

pub fn nmse_signal(a: &Signal, b: &Signal) -> f64 {
    let num: f64 = a
        .x
        .iter()
        .zip(&b.x)
        .chain(a.y.iter().zip(&b.y))
        .map(|(p, q)| (p - q).norm_sqr())
        .sum();
    num / b.energy()
}

pub fn nmse_symbols(a: &Symbols, b: &Symbols) -> f64 {
    let num: f64 = a
        .x
        .iter()
        .zip(&b.x)
        .chain(a.y.iter().zip(&b.y))
        .map(|(p, q)| (p - q).norm_sqr())
        .sum();
    num / b.energy()
}

pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    1e-3 * 10f64.powf(p_dbm / 10.0)
}

pub fn watts_to_dbm(p_w: f64) -> f64 {
    10.0 * (p_w / 1e-3).log10()
}

/// Rational oversampling factor, e.g. `9/8` for 1.125 samples per symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Oversampling {
    pub num: u32,
    pub den: u32,
}

impl Oversampling {
    pub const fn new(num: u32, den: u32) -> Self {
        Oversampling { num, den }
    }

    pub const fn integer(n: u32) -> Self {
        Oversampling { num: n, den: 1 }
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Number of samples for `n_symbols`, which must be a multiple of `den`.
    pub fn samples_for(&self, n_symbols: usize) -> Result<usize> {
        if self.den == 0 || self.num == 0 {
            return Err(Error::param("samples_per_symbol", "zero numerator or denominator"));
        }
        let prod = n_symbols * self.num as usize;
        if prod % self.den as usize != 0 {
            return Err(Error::param(
                "samples_per_symbol",
                format!("{n_symbols} symbols at {}/{} samples/symbol is not an integer sample count", self.num, self.den),
            ));
        }
        Ok(prod / self.den as usize)
    }
}

impl std::fmt::Display for Oversampling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Pulse shaping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PulseConfig {
    /// Symbol rate in Bd.
    pub symbol_rate: f64,
    /// Root-raised-cosine roll-off.
    pub rolloff: f64,
    pub samples_per_symbol: Oversampling,
}

impl Default for PulseConfig {
    fn default() -> Self {
        PulseConfig {
            symbol_rate: 46.5e9,
            rolloff: 0.05,
            samples_per_symbol: Oversampling::integer(2),
        }
    }
}

impl PulseConfig {
    pub fn with_sps(mut self, sps: Oversampling) -> Self {
        self.samples_per_symbol = sps;
        self
    }

    pub fn sample_rate(&self) -> f64 {
        self.symbol_rate * self.samples_per_symbol.as_f64()
    }

    /// Two-sided occupied bandwidth `Rs (1 + rolloff)`.
    pub fn occupied_bandwidth(&self) -> f64 {
        self.symbol_rate * (1.0 + self.rolloff)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.symbol_rate > 0.0) {
            return Err(Error::param("symbol_rate", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(Error::param("rolloff", format!("{} outside [0, 1]", self.rolloff)));
        }
        if self.samples_per_symbol.as_f64() + 1e-12 < 1.0 + self.rolloff {
            return Err(Error::Aliasing(format!(
                "{} samples/symbol cannot carry a roll-off {} pulse",
                self.samples_per_symbol, self.rolloff
            )));
        }
        Ok(())
    }

    /// Raised-cosine spectrum `|P(f)|^2`, unit at DC; its `Rs`-periodic
    /// aliases sum to one.
    pub fn raised_cosine(&self, f: f64) -> f64 {
        let rs = self.symbol_rate;
        let af = f.abs();
        let f1 = (1.0 - self.rolloff) * rs / 2.0;
        let f2 = (1.0 + self.rolloff) * rs / 2.0;
        if af <= f1 {
            1.0
        } else if af >= f2 {
            0.0
        } else {
            0.5 * (1.0 + (std::f64::consts::PI / (self.rolloff * rs) * (af - f1)).cos())
        }
    }

    pub fn root_raised_cosine(&self, f: f64) -> f64 {
        self.raised_cosine(f).sqrt()
    }
}

/// Shape a symbol block with root-raised-cosine pulses.
///
/// The output is sampled at `symbol_rate * samples_per_symbol` and its mean
/// power equals the mean symbol energy per polarization.
pub fn rrc_shape(symbols: &Symbols, cfg: &PulseConfig) -> Result<Signal> {
    if symbols.is_empty() {
        return Err(Error::EmptyInput("symbol sequence"));
    }
    cfg.validate()?;
    let n = symbols.len();
    let m = cfg.samples_per_symbol.samples_for(n)?;
    let df = cfg.symbol_rate / n as f64;
    let gain = m as f64 / n as f64;
    let shape = |s: &[C64]| -> Vec<C64> {
        let spec = fft::fft(s);
        let mut out = vec![C64::new(0.0, 0.0); m];
        for (k, o) in out.iter_mut().enumerate() {
            let sb = fft::signed_bin(k, m);
            let h = cfg.root_raised_cosine(sb as f64 * df);
            if h > 0.0 {
                *o = spec[fft::bin_index(sb, n)] * (h * gain);
            }
        }
        fft::ifft_in_place(&mut out);
        out
    };
    Signal::new(shape(&symbols.x), shape(&symbols.y), cfg.sample_rate())
}

/// Root-raised-cosine matched filter followed by sampling at the symbol
/// instants. The symbol count is `duration * symbol_rate`, which must be an
/// integer.
pub fn matched_filter_sample(sig: &Signal, cfg: &PulseConfig) -> Result<Symbols> {
    if !(0.0..=1.0).contains(&cfg.rolloff) {
        return Err(Error::param("rolloff", format!("{} outside [0, 1]", cfg.rolloff)));
    }
    if sig.sample_rate + 1e-6 < cfg.occupied_bandwidth() {
        return Err(Error::Aliasing(format!(
            "sample rate {:.4e} Hz below the shaped bandwidth {:.4e} Hz",
            sig.sample_rate,
            cfg.occupied_bandwidth()
        )));
    }
    let m = sig.len();
    let n_real = m as f64 * cfg.symbol_rate / sig.sample_rate;
    let n = (n_real + 1e-6).floor() as usize;
    if n == 0 || (n_real - n as f64).abs() > 1e-6 {
        return Err(Error::param(
            "signal length",
            format!("{m} samples do not hold an integer number of symbols ({n_real})"),
        ));
    }
    let df = sig.sample_rate / m as f64;
    let gain = n as f64 / m as f64;
    let filt = |s: &[C64]| -> Vec<C64> {
        let spec = fft::fft(s);
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (k, v) in spec.iter().enumerate() {
            let sb = fft::signed_bin(k, m);
            let h = cfg.root_raised_cosine(sb as f64 * df);
            if h > 0.0 {
                out[fft::bin_index(sb, n)] += v * (h * gain);
            }
        }
        fft::ifft_in_place(&mut out);
        out
    };
    Symbols::new(filt(&sig.x), filt(&sig.y))
}

/// FFT resampling of a cyclic waveform to `new_rate` (zero-pad or truncate
/// the spectrum). Energy outside the new band is discarded.
pub fn resample(sig: &Signal, new_rate: f64) -> Result<Signal> {
    let m = sig.len();
    let new_len_real = m as f64 * new_rate / sig.sample_rate;
    let new_len = new_len_real.round() as usize;
    if new_len == 0 || (new_len_real - new_len as f64).abs() > 1e-6 {
        return Err(Error::param(
            "new_rate",
            format!("{m} samples cannot be resampled to an integer length ({new_len_real})"),
        ));
    }
    let gain = new_len as f64 / m as f64;
    let half = (new_len.min(m) as i64 - 1) / 2;
    let res = |s: &[C64]| -> Vec<C64> {
        let spec = fft::fft(s);
        let mut out = vec![C64::new(0.0, 0.0); new_len];
        for sb in -half..=half {
            out[fft::bin_index(sb, new_len)] = spec[fft::bin_index(sb, m)] * gain;
        }
        if new_len >= m && m % 2 == 0 {
            // split the ambiguous Nyquist bin of the shorter grid
            let v = spec[m / 2] * (gain * 0.5);
            out[fft::bin_index(-(m as i64) / 2, new_len)] += v;
            out[fft::bin_index(m as i64 / 2, new_len)] += v;
        }
        fft::ifft_in_place(&mut out);
        out
    };
    let mut out = Signal::new(res(&sig.x), res(&sig.y), new_rate)?;
    out.center_offset = sig.center_offset;
    Ok(out)
}

/// Largest absolute signed bin index whose power exceeds `rel` times the
/// strongest bin.
fn spectral_support(power: &[f64], excluded: f64) -> i64 {
    // smallest |bin| radius holding all but `excluded` of the energy
    let n = power.len();
    let total: f64 = power.iter().sum();
    let mut by_radius = vec![0.0; n / 2 + 1];
    for (k, p) in power.iter().enumerate() {
        by_radius[fft::signed_bin(k, n).unsigned_abs() as usize] += p;
    }
    let mut acc = 0.0;
    for (r, p) in by_radius.iter().enumerate() {
        acc += p;
        if acc >= total * (1.0 - excluded) {
            return r as i64;
        }
    }
    (n / 2) as i64
}

/// Offset rounded to the DFT grid of a length-`n` block at `fs`.
pub fn grid_offset(offset: f64, n: usize, fs: f64) -> (i64, f64) {
    let k = (offset * n as f64 / fs).round() as i64;
    (k, k as f64 * fs / n as f64)
}

/// Frequency-multiplex channels onto one waveform.
///
/// Each channel must already be at the common sample rate. Offsets are
/// rounded to the DFT grid so the shifted waveforms stay cyclic.
pub fn wdm_mux(channels: &[(Signal, f64)]) -> Result<Signal> {
    let (first, _) = channels.first().ok_or(Error::EmptyInput("channel list"))?;
    let m = first.len();
    let fs = first.sample_rate;
    let mut x = vec![C64::new(0.0, 0.0); m];
    let mut y = vec![C64::new(0.0, 0.0); m];
    for (ch, offset) in channels {
        if ch.len() != m {
            return Err(Error::LengthMismatch {
                what: "WDM channel length",
                expected: m,
                got: ch.len(),
            });
        }
        if (ch.sample_rate - fs).abs() > 1e-9 * fs {
            return Err(Error::param("sample_rate", "WDM channels must share one sample rate"));
        }
        let (k, _) = grid_offset(*offset, m, fs);
        let support = spectral_support(&ch.power_spectrum(), 1e-6);
        if support + k.abs() >= (m as i64 + 1) / 2 {
            return Err(Error::Aliasing(format!(
                "channel at {:.3e} Hz extends beyond the simulated band of {:.3e} Hz",
                offset, fs
            )));
        }
        if k == 0 {
            x.iter_mut().zip(&ch.x).for_each(|(a, b)| *a += b);
            y.iter_mut().zip(&ch.y).for_each(|(a, b)| *a += b);
        } else {
            let w = 2.0 * std::f64::consts::PI / m as f64;
            for i in 0..m {
                // phase index reduced modulo m keeps the argument small
                let ph = C64::from_polar(1.0, w * (i as i64 * k).rem_euclid(m as i64) as f64);
                x[i] += ch.x[i] * ph;
                y[i] += ch.y[i] * ph;
            }
        }
    }
    Signal::new(x, y, fs)
}

/// Extract one WDM channel: shift it to baseband, apply a brick-wall
/// low-pass of width `Rs (1 + rolloff)` and resample to the processing rate
/// `cfg.samples_per_symbol`.
pub fn wdm_demux(sig: &Signal, offset: f64, cfg: &PulseConfig) -> Result<Signal> {
    cfg.validate()?;
    let m = sig.len();
    let fs = sig.sample_rate;
    if offset.abs() + cfg.occupied_bandwidth() / 2.0 > fs / 2.0 + 1e-6 {
        return Err(Error::param(
            "offset",
            format!("channel at {offset:.4e} Hz lies outside the simulated band"),
        ));
    }
    let (k, exact) = grid_offset(offset, m, fs);
    let n_real = m as f64 * cfg.symbol_rate / fs;
    let n_sym = n_real.round() as usize;
    if (n_real - n_sym as f64).abs() > 1e-6 {
        return Err(Error::param("signal length", "not an integer number of symbols"));
    }
    let m_out = cfg.samples_per_symbol.samples_for(n_sym)?;
    let df = fs / m as f64;
    let edge = cfg.occupied_bandwidth() / 2.0;
    let gain = m_out as f64 / m as f64;
    let pick = |s: &[C64]| -> Vec<C64> {
        let spec = fft::fft(s);
        let mut out = vec![C64::new(0.0, 0.0); m_out];
        for (j, o) in out.iter_mut().enumerate() {
            let sb = fft::signed_bin(j, m_out);
            if (sb as f64 * df).abs() <= edge + 1e-9 * fs {
                *o = spec[fft::bin_index(sb + k, m)] * gain;
            }
        }
        fft::ifft_in_place(&mut out);
        out
    };
    let mut out = Signal::new(pick(&sig.x), pick(&sig.y), cfg.sample_rate())?;
    out.center_offset = sig.center_offset + exact;
    Ok(out)
}

/// Scale both polarizations so the total mean power is `p_dbm`.
pub fn set_power(sig: &Signal, p_dbm: f64) -> Result<Signal> {
    let p = sig.mean_power();
    if !(p > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    let mut out = sig.clone();
    out.scale((dbm_to_watts(p_dbm) / p).sqrt());
    Ok(out)
}

/// Per-axis description of a square QAM grid with product priors, used for
/// fast slicing and separable likelihood sums.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisGrid {
    /// Signed, normalized levels in increasing order.
    pub levels: Vec<f64>,
    /// Probability of each level on one axis.
    pub probs: Vec<f64>,
}

/// Finite 2D constellation with priors.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub points: Vec<C64>,
    pub labels: Vec<u32>,
    pub priors: Vec<f64>,
    pub grid: Option<AxisGrid>,
}

impl Constellation {
    /// Generic constellation; priors are renormalized to sum to one.
    pub fn new(points: Vec<C64>, labels: Vec<u32>, priors: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("constellation points"));
        }
        if labels.len() != points.len() || priors.len() != points.len() {
            return Err(Error::LengthMismatch {
                what: "constellation labels/priors",
                expected: points.len(),
                got: labels.len().min(priors.len()),
            });
        }
        let total: f64 = priors.iter().sum();
        if !(total > 0.0) || priors.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(Error::param("priors", "must be non-negative with positive sum"));
        }
        Ok(Constellation {
            points,
            labels,
            priors: priors.iter().map(|p| p / total).collect(),
            grid: None,
        })
    }

    /// Square QAM whose per-axis amplitudes `1, 3, .., 2L-1` carry the
    /// probabilities `amp_pmf` (signs equiprobable). Scaled to unit mean
    /// energy under the priors. Labels are per-axis Gray codes.
    pub fn square_qam(amp_pmf: &[f64]) -> Result<Self> {
        let l = amp_pmf.len();
        if l == 0 {
            return Err(Error::EmptyInput("amplitude pmf"));
        }
        let total: f64 = amp_pmf.iter().sum();
        let pmf: Vec<f64> = amp_pmf.iter().map(|p| p / total).collect();
        let e_axis: f64 = pmf
            .iter()
            .enumerate()
            .map(|(i, p)| p * ((2 * i + 1) as f64).powi(2))
            .sum();
        let scale = 1.0 / (2.0 * e_axis).sqrt();
        // axis level j in 0..2L runs from -(2L-1) to +(2L-1)
        let mut levels = Vec::with_capacity(2 * l);
        let mut probs = Vec::with_capacity(2 * l);
        for j in 0..2 * l {
            let a = 2 * j as i64 - (2 * l as i64 - 1);
            levels.push(a as f64 * scale);
            probs.push(pmf[(a.unsigned_abs() as usize - 1) / 2] / 2.0);
        }
        let bits = (2 * l).trailing_zeros();
        let mut points = Vec::new();
        let mut labels = Vec::new();
        let mut priors = Vec::new();
        for (i, (li, pi)) in levels.iter().zip(&probs).enumerate() {
            for (q, (lq, pq)) in levels.iter().zip(&probs).enumerate() {
                points.push(C64::new(*li, *lq));
                let gi = (i ^ (i >> 1)) as u32;
                let gq = (q ^ (q >> 1)) as u32;
                labels.push((gi << bits) | gq);
                priors.push(pi * pq);
            }
        }
        let mut c = Constellation::new(points, labels, priors)?;
        c.grid = Some(AxisGrid { levels, probs });
        Ok(c)
    }

    /// Uniform square QAM of the given order (a perfect square of an even
    /// power of two, e.g. 4, 16, 64).
    pub fn uniform_qam(order: usize) -> Result<Self> {
        let side = (order as f64).sqrt().round() as usize;
        if side * side != order || side < 2 || side % 2 != 0 {
            return Err(Error::param("order", format!("{order} is not a square QAM order")));
        }
        Constellation::square_qam(&vec![1.0; side / 2])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean_energy(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.priors)
            .map(|(c, p)| p * c.norm_sqr())
            .sum()
    }

    /// Entropy of the priors in bits per 2D symbol.
    pub fn entropy_bits(&self) -> f64 {
        entropy_bits(&self.priors)
    }

    /// The same constellation rotated by `theta`; the axis grid is dropped.
    pub fn rotated(&self, theta: f64) -> Constellation {
        let r = C64::from_polar(1.0, theta);
        Constellation {
            points: self.points.iter().map(|p| p * r).collect(),
            labels: self.labels.clone(),
            priors: self.priors.clone(),
            grid: None,
        }
    }

    /// Nearest constellation point (priors ignored).
    pub fn nearest(&self, y: C64) -> C64 {
        if let Some(g) = &self.grid {
            C64::new(slice_axis(&g.levels, y.re), slice_axis(&g.levels, y.im))
        } else {
            *self
                .points
                .iter()
                .min_by(|a, b| (y - *a).norm_sqr().total_cmp(&(y - *b).norm_sqr()))
                .expect("non-empty constellation")
        }
    }
}

fn slice_axis(levels: &[f64], v: f64) -> f64 {
    // levels are uniformly spaced and sorted
    let n = levels.len();
    if n == 1 {
        return levels[0];
    }
    let step = levels[1] - levels[0];
    let idx = ((v - levels[0]) / step).round().clamp(0.0, (n - 1) as f64) as usize;
    levels[idx]
}

pub fn entropy_bits(p: &[f64]) -> f64 {
    p.iter().filter(|v| **v > 0.0).map(|v| -v * v.log2()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_qam(n: usize, seed: u64) -> Symbols {
        let c = Constellation::uniform_qam(64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pick = || c.points[rng.random_range(0..64)];
        let x = (0..n).map(|_| pick()).collect();
        let y = (0..n).map(|_| pick()).collect();
        Symbols::new(x, y).unwrap()
    }

    #[test]
    fn uniform_64qam_has_unit_energy() {
        let c = Constellation::uniform_qam(64).unwrap();
        assert_eq!(c.len(), 64);
        assert!((c.priors.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((c.mean_energy() - 1.0).abs() < 1e-12);
        assert!((c.entropy_bits() - 6.0).abs() < 1e-12);
        let mut labels = c.labels.clone();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), 64);
    }

    #[test]
    fn single_symbol_gives_peaked_impulse_response() {
        let mut s = Symbols::zeros(64);
        s.x[0] = C64::new(1.0, 0.0);
        let cfg = PulseConfig::default().with_sps(Oversampling::integer(4));
        let sig = rrc_shape(&s, &cfg).unwrap();
        let peak = sig
            .x
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap()
            .0;
        assert_eq!(peak, 0);
        // real and even impulse response
        for k in 1..sig.len() / 2 {
            assert!((sig.x[k] - sig.x[sig.len() - k]).norm() < 1e-12);
            assert!(sig.x[k].im.abs() < 1e-12);
        }
        assert!(sig.y.iter().all(|v| v.norm() < 1e-15));
    }

    #[test]
    fn rrc_spectrum_is_confined() {
        // constant-envelope QPSK
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = std::f64::consts::FRAC_1_SQRT_2;
        let mut qpsk = || C64::new(if rng.random() { q } else { -q }, if rng.random() { q } else { -q });
        let x: Vec<C64> = (0..1024).map(|_| qpsk()).collect();
        let y: Vec<C64> = (0..1024).map(|_| qpsk()).collect();
        let cfg = PulseConfig::default().with_sps(Oversampling::integer(4));
        let sig = rrc_shape(&Symbols::new(x, y).unwrap(), &cfg).unwrap();
        let ps = sig.power_spectrum();
        let total: f64 = ps.iter().sum();
        let edge = cfg.occupied_bandwidth() / 2.0;
        let oob: f64 = ps
            .iter()
            .enumerate()
            .filter(|(k, _)| fft::bin_frequency(*k, sig.len(), sig.sample_rate).abs() > edge)
            .map(|(_, p)| p)
            .sum();
        assert!(oob / total < 1e-4, "out-of-band fraction {}", oob / total);
    }

    #[test]
    fn shape_then_match_is_isi_free() {
        let s = random_qam(4096, 1);
        for sps in [Oversampling::new(9, 8), Oversampling::integer(2), Oversampling::integer(8)] {
            let cfg = PulseConfig::default().with_sps(sps);
            let sig = rrc_shape(&s, &cfg).unwrap();
            assert!((sig.mean_power() / 2.0 - s.mean_energy_2d()).abs() < 1e-9 * s.mean_energy_2d());
            let r = matched_filter_sample(&sig, &cfg).unwrap();
            assert!(nmse_symbols(&r, &s) < 1e-6);
        }
    }

    #[test]
    fn integer_delay_is_compensable() {
        let s = random_qam(512, 2);
        let cfg = PulseConfig::default();
        let sig = rrc_shape(&s, &cfg).unwrap();
        let delayed = sig.circular_shift(7);
        let r = matched_filter_sample(&delayed.circular_shift(-7), &cfg).unwrap();
        assert!(nmse_symbols(&r, &s) < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = PulseConfig::default();
        assert!(matches!(rrc_shape(&Symbols::default(), &cfg), Err(Error::EmptyInput(_))));
        let bad = PulseConfig { rolloff: 1.5, ..cfg };
        assert!(rrc_shape(&Symbols::zeros(8), &bad).is_err());
        let s = rrc_shape(&random_qam(64, 3), &cfg).unwrap();
        let under = PulseConfig { symbol_rate: cfg.symbol_rate * 2.0, ..cfg };
        assert!(matches!(matched_filter_sample(&s, &under), Err(Error::Aliasing(_))));
    }

    #[test]
    fn set_power_defines_launch_power() {
        let sig = rrc_shape(&random_qam(256, 4), &PulseConfig::default()).unwrap();
        let a = set_power(&sig, 0.0).unwrap();
        assert!((a.mean_power() - 1e-3).abs() < 1e-15);
        let b = set_power(&sig, -3.0103).unwrap();
        assert!((b.mean_power() - 0.5e-3).abs() < 1e-7);
        let c = set_power(&a, 0.0).unwrap();
        assert!(nmse_signal(&c, &a) < 1e-28);
        let zero = Signal::new(vec![C64::new(0.0, 0.0); 4], vec![C64::new(0.0, 0.0); 4], 1.0).unwrap();
        assert_eq!(set_power(&zero, 0.0), Err(Error::ZeroEnergy));
    }

    #[test]
    fn resample_roundtrip() {
        let cfg = PulseConfig::default();
        let sig = rrc_shape(&random_qam(512, 5), &cfg).unwrap();
        let up = resample(&sig, sig.sample_rate * 4.0).unwrap();
        let back = resample(&up, sig.sample_rate).unwrap();
        assert!(nmse_signal(&back, &sig) < 1e-20);
        assert!(((up.energy() / up.len() as f64) - sig.mean_power()).abs() < 1e-12);
    }
}
