//! Forward fiber channel: Manakov split-step propagation per span, lumped
//! EDFA gain with ASE, laser phase noise and an AWGN surrogate.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Role};
use crate::signal::{Signal, Symbols, C64};
use crate::splitstep::{self, Direction, Engine};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;

fn yes() -> bool {
    true
}

/// Physical link description. Fiber constants default to standard
/// single-mode fiber at 1550 nm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkConfig {
    pub n_spans: u32,
    pub span_km: f64,
    pub alpha_db_km: f64,
    pub disp_ps_nm_km: f64,
    pub gamma_w_km: f64,
    pub nf_db: f64,
    pub wavelength_nm: f64,
    /// Add ASE at the amplifiers.
    #[serde(default = "yes")]
    pub ase: bool,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            n_spans: 30,
            span_km: 100.0,
            alpha_db_km: 0.2,
            disp_ps_nm_km: 17.0,
            gamma_w_km: 1.3,
            nf_db: 5.0,
            wavelength_nm: 1550.0,
            ase: true,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_spans == 0 {
            return Err(Error::param("n_spans", "at least one span"));
        }
        let positive = [("span_km", self.span_km), ("wavelength_nm", self.wavelength_nm)];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(name, "must be positive"));
            }
        }
        let non_negative = [("alpha_db_km", self.alpha_db_km), ("gamma_w_km", self.gamma_w_km)];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, "must be non-negative"));
            }
        }
        if !self.disp_ps_nm_km.is_finite() || self.nf_db.is_nan() {
            return Err(Error::param("disp_ps_nm_km", "must be finite"));
        }
        Ok(())
    }

    pub fn span_m(&self) -> f64 {
        self.span_km * 1e3
    }

    pub fn total_m(&self) -> f64 {
        self.span_m() * self.n_spans as f64
    }

    /// Power attenuation coefficient in 1/m.
    pub fn alpha(&self) -> f64 {
        self.alpha_db_km * std::f64::consts::LN_10 / 10.0 / 1e3
    }

    /// Group-velocity dispersion `beta2 = -D lambda^2 / (2 pi c)` in s^2/m.
    pub fn beta2(&self) -> f64 {
        let d = self.disp_ps_nm_km * 1e-6;
        let lambda = self.wavelength_nm * 1e-9;
        -d * lambda * lambda / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT)
    }

    /// Kerr coefficient in 1/(W m).
    pub fn gamma(&self) -> f64 {
        self.gamma_w_km * 1e-3
    }

    pub fn span_loss_db(&self) -> f64 {
        self.alpha_db_km * self.span_km
    }

    pub fn carrier_hz(&self) -> f64 {
        SPEED_OF_LIGHT / (self.wavelength_nm * 1e-9)
    }

    pub fn linear(mut self) -> Self {
        self.gamma_w_km = 0.0;
        self
    }

    pub fn noiseless(mut self) -> Self {
        self.ase = false;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    Logarithmic,
}

/// Forward step policy per span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepPlan {
    pub steps_per_span: u32,
    pub spacing: Spacing,
    /// Position of the nonlinear operator inside each step.
    pub split_ratio: f64,
}

impl Default for StepPlan {
    fn default() -> Self {
        StepPlan {
            steps_per_span: 100,
            spacing: Spacing::Logarithmic,
            split_ratio: 0.5,
        }
    }
}

impl StepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_span == 0 {
            return Err(Error::param("steps_per_span", "at least one step"));
        }
        if !(0.0..=1.0).contains(&self.split_ratio) {
            return Err(Error::param("split_ratio", "outside [0, 1]"));
        }
        Ok(())
    }

    /// Steps of one span.
    pub fn span_steps(&self, link: &LinkConfig) -> Vec<splitstep::Step> {
        splitstep::span_steps(
            link,
            self.steps_per_span as usize,
            self.spacing == Spacing::Logarithmic,
            self.split_ratio,
        )
    }

    /// Steps of the whole link (span grid repeated).
    pub fn link_steps(&self, link: &LinkConfig) -> Vec<splitstep::Step> {
        let span = self.span_steps(link);
        (0..link.n_spans).flat_map(|_| span.iter().copied()).collect()
    }
}

/// Reject waveforms whose spectrum reaches the edge of the simulated band,
/// where nonlinear broadening would alias.
pub fn check_band(sig: &Signal) -> Result<()> {
    let ps = sig.power_spectrum();
    let n = ps.len();
    let total: f64 = ps.iter().sum();
    if total == 0.0 {
        return Ok(());
    }
    let guard = (0.9 * n as f64 / 2.0) as i64;
    let edge: f64 = ps
        .iter()
        .enumerate()
        .filter(|(k, _)| crate::fft::signed_bin(*k, n).abs() > guard)
        .map(|(_, p)| p)
        .sum();
    if edge > 1e-5 * total {
        return Err(Error::Aliasing(format!(
            "{:.2e} of the signal energy lies in the outer 10% of the simulated band",
            edge / total
        )));
    }
    Ok(())
}

/// Propagate through one fiber span without the amplifier; the output is
/// attenuated by the span loss.
pub fn propagate_span(sig: &Signal, link: &LinkConfig, plan: &StepPlan) -> Result<Signal> {
    link.validate()?;
    plan.validate()?;
    let mut out = sig.clone();
    let steps = plan.span_steps(link);
    Engine::new(link).run(&mut out, &steps, Direction::Forward, &[1.0]);
    out.scale((-0.5 * link.alpha() * link.span_m()).exp());
    Ok(out)
}

/// Forward propagation over the full link: per span, split-step fiber
/// followed by an EDFA whose gain equals the span loss. ASE for span `s`
/// is drawn from the stream `(rng_seed, Ase, s)`.
pub fn ssfm_forward(sig: &Signal, link: &LinkConfig, plan: &StepPlan, rng_seed: u64) -> Result<Signal> {
    link.validate()?;
    plan.validate()?;
    check_band(sig)?;
    let steps = plan.span_steps(link);
    let loss = (-0.5 * link.alpha() * link.span_m()).exp();
    let mut engine = Engine::new(link);
    let mut out = sig.clone();
    let nf = if link.ase { link.nf_db } else { f64::NEG_INFINITY };
    for span in 0..link.n_spans {
        engine.run(&mut out, &steps, Direction::Forward, &[1.0]);
        out.scale(loss);
        let mut r = rng::stream(rng_seed, Role::Ase, span);
        amplify(&mut out, link.span_loss_db(), nf, link.carrier_hz(), &mut r)?;
    }
    Ok(out)
}

/// ASE power spectral density per polarization, `n_sp h nu (G - 1)` in W/Hz.
pub fn ase_psd(gain_db: f64, nf_db: f64, carrier_hz: f64) -> f64 {
    let g = 10f64.powf(gain_db / 10.0);
    let nsp = 10f64.powf(nf_db / 10.0) / 2.0;
    nsp * PLANCK * carrier_hz * (g - 1.0)
}

fn amplify(sig: &mut Signal, gain_db: f64, nf_db: f64, carrier_hz: f64, rng: &mut impl Rng) -> Result<()> {
    if !(gain_db >= 0.0) {
        return Err(Error::param("gain_db", "amplifier gain must be non-negative"));
    }
    sig.scale(10f64.powf(gain_db / 20.0));
    let var = ase_psd(gain_db, nf_db, carrier_hz) * sig.sample_rate;
    if var > 0.0 {
        add_circular_noise(&mut sig.x, var, rng);
        add_circular_noise(&mut sig.y, var, rng);
    }
    Ok(())
}

/// EDFA: field gain `G^1/2` plus white circular ASE on each polarization
/// with per-sample variance `S_ASE * sample_rate`. `nf_db = -inf` gives a
/// noiseless amplifier.
pub fn edfa_amplify(sig: &Signal, gain_db: f64, nf_db: f64, wavelength_nm: f64, rng_seed: u64) -> Result<Signal> {
    let mut out = sig.clone();
    let carrier = SPEED_OF_LIGHT / (wavelength_nm * 1e-9);
    amplify(&mut out, gain_db, nf_db, carrier, &mut rng::stream(rng_seed, Role::Ase, 0))?;
    Ok(out)
}

/// Add circular complex Gaussian noise with `E|n|^2 = var`.
pub fn add_circular_noise(v: &mut [C64], var: f64, rng: &mut impl Rng) {
    let s = (var / 2.0).sqrt();
    for c in v.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *c += C64::new(re * s, im * s);
    }
}

/// Wiener phase process with increment variance `2 pi linewidth / fs`,
/// starting at zero.
pub fn phase_noise_track(n: usize, linewidth_hz: f64, sample_rate: f64, rng_seed: u64) -> Vec<f64> {
    let mut theta = vec![0.0; n];
    if linewidth_hz <= 0.0 {
        return theta;
    }
    let sd = (2.0 * std::f64::consts::PI * linewidth_hz / sample_rate).sqrt();
    let mut r = rng::stream(rng_seed, Role::TxLaser, 0);
    for k in 1..n {
        let d: f64 = r.sample(StandardNormal);
        theta[k] = theta[k - 1] + sd * d;
    }
    theta
}

/// Multiply both polarizations by `exp(j theta_k)` for a Wiener phase
/// process; zero linewidth is the identity.
pub fn apply_phase_noise(sig: &Signal, linewidth_hz: f64, rng_seed: u64) -> Result<Signal> {
    if !(linewidth_hz >= 0.0) {
        return Err(Error::param("linewidth_hz", "must be non-negative"));
    }
    if linewidth_hz == 0.0 {
        return Ok(sig.clone());
    }
    let theta = phase_noise_track(sig.len(), linewidth_hz, sig.sample_rate, rng_seed);
    let mut out = sig.clone();
    for ((x, y), t) in out.x.iter_mut().zip(out.y.iter_mut()).zip(&theta) {
        let r = C64::from_polar(1.0, *t);
        *x *= r;
        *y *= r;
    }
    Ok(out)
}

/// White noise for a target per-2D SNR at the symbol rate: with matched
/// filtering, the per-symbol noise variance equals the per-sample variance
/// divided by the oversampling factor. An infinite SNR returns the input.
pub fn awgn(sig: &Signal, snr_db: f64, symbol_rate: f64, rng_seed: u64) -> Result<Signal> {
    if snr_db == f64::INFINITY {
        return Ok(sig.clone());
    }
    let p2d = sig.mean_power() / 2.0;
    if !(p2d > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    let sps = sig.sample_rate / symbol_rate;
    let var = p2d * sps / 10f64.powf(snr_db / 10.0);
    let mut out = sig.clone();
    let mut r = rng::stream(rng_seed, Role::Awgn, 0);
    add_circular_noise(&mut out.x, var, &mut r);
    add_circular_noise(&mut out.y, var, &mut r);
    Ok(out)
}

/// AWGN on a symbol sequence at per-2D SNR `snr_db`.
pub fn awgn_symbols(sym: &Symbols, snr_db: f64, rng_seed: u64) -> Result<Symbols> {
    if snr_db == f64::INFINITY {
        return Ok(sym.clone());
    }
    let p = sym.mean_energy_2d();
    if !(p > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    let var = p / 10f64.powf(snr_db / 10.0);
    let mut out = sym.clone();
    let mut r = rng::stream(rng_seed, Role::Awgn, 0);
    add_circular_noise(&mut out.x, var, &mut r);
    add_circular_noise(&mut out.y, var, &mut r);
    Ok(out)
}
