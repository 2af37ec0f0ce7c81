//! Receiver-side equalization: chromatic dispersion compensation, split-step
//! backpropagation, the enhanced split-step (ESSFM) with a trained power
//! filter, its single-band coupled-band variant with a trained split ratio,
//! and a real-multiplication cost model.
//!
//! ESSFM coefficients are normalized: the nonlinear phase of a step covering
//! power integral `W` is `gamma 8/9 W (c0 P_k + sum_i c_i (P_{k+i} + P_{k-i}))`,
//! so `[1, 0, .., 0]` is exactly a plain split-step kick. One coefficient
//! vector and one split ratio are shared by all steps.

use serde::{Deserialize, Serialize};

use crate::channel::{LinkConfig, Spacing};
use crate::error::{Error, Result};
use crate::signal::{matched_filter_sample, Oversampling, PulseConfig, Signal, Symbols, C64};
use crate::splitstep::{self, Direction, Engine, Step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Cdc,
    Ssfm,
    Essfm,
    CbEssfm,
}

impl EngineKind {
    pub fn name(&self) -> &'static str {
        match self {
            EngineKind::Cdc => "cdc",
            EngineKind::Ssfm => "ssfm",
            EngineKind::Essfm => "essfm",
            EngineKind::CbEssfm => "cb_essfm",
        }
    }
}

fn uniform() -> Spacing {
    Spacing::Uniform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DbpConfig {
    pub engine: EngineKind,
    /// Total steps over the link; zero means dispersion compensation only.
    pub n_steps: u32,
    /// Half-length of the power filter.
    pub n_coeffs: u32,
    /// Normalized power-filter taps `c0..c_Nc`; empty means untrained.
    #[serde(default)]
    pub coeffs: Vec<f64>,
    pub split_ratio: f64,
    pub samples_per_symbol: Oversampling,
    /// Overlap-save block length used by the cost model.
    pub fft_block: u32,
    /// Overlap-save overlap, at least the dispersion memory of one step.
    pub overlap: u32,
    #[serde(default = "uniform")]
    pub spacing: Spacing,
}

impl Default for DbpConfig {
    fn default() -> Self {
        DbpConfig {
            engine: EngineKind::Cdc,
            n_steps: 0,
            n_coeffs: 0,
            coeffs: Vec::new(),
            split_ratio: 0.5,
            samples_per_symbol: Oversampling::new(9, 8),
            fft_block: 0,
            overlap: 0,
            spacing: Spacing::Uniform,
        }
    }
}

impl DbpConfig {
    pub fn cdc() -> Self {
        DbpConfig::default()
    }

    pub fn ssfm(n_steps: u32) -> Self {
        DbpConfig {
            engine: EngineKind::Ssfm,
            n_steps,
            coeffs: vec![1.0],
            ..DbpConfig::default()
        }
    }

    /// ESSFM with SSFM-equivalent initial coefficients.
    pub fn essfm(n_steps: u32, n_coeffs: u32) -> Self {
        DbpConfig {
            engine: EngineKind::Essfm,
            n_steps,
            n_coeffs,
            coeffs: ssfm_equivalent(n_coeffs),
            ..DbpConfig::default()
        }
    }

    pub fn cb_essfm(n_steps: u32, n_coeffs: u32) -> Self {
        DbpConfig {
            engine: EngineKind::CbEssfm,
            ..DbpConfig::essfm(n_steps, n_coeffs)
        }
    }

    pub fn with_sps(mut self, sps: Oversampling) -> Self {
        self.samples_per_symbol = sps;
        self
    }

    /// Effective taps for the configured engine.
    pub fn taps(&self) -> Result<Vec<f64>> {
        match self.engine {
            EngineKind::Cdc => Ok(Vec::new()),
            EngineKind::Ssfm => Ok(vec![1.0]),
            EngineKind::Essfm | EngineKind::CbEssfm => {
                if self.coeffs.len() != self.n_coeffs as usize + 1 {
                    return Err(Error::param(
                        "coeffs",
                        format!("expected {} taps, got {}", self.n_coeffs + 1, self.coeffs.len()),
                    ));
                }
                Ok(self.coeffs.clone())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.split_ratio) {
            return Err(Error::param("split_ratio", "outside [0, 1]"));
        }
        if self.engine != EngineKind::Cdc && self.n_steps == 0 {
            return Err(Error::param("n_steps", "nonlinear engines need at least one step"));
        }
        if self.fft_block > 0 && self.overlap >= self.fft_block {
            return Err(Error::param("fft_block", "step filter longer than the FFT block"));
        }
        if self.coeffs.is_empty() && matches!(self.engine, EngineKind::Essfm | EngineKind::CbEssfm) {
            return Ok(());
        }
        self.taps().map(|_| ())
    }

    /// Check the overlap against the dispersion memory of one step.
    pub fn validate_for(&self, link: &LinkConfig, symbol_rate: f64) -> Result<()> {
        self.validate()?;
        if self.fft_block > 0 {
            let mem = step_memory_samples(link, self, symbol_rate);
            if (self.overlap as usize) < mem {
                return Err(Error::param(
                    "overlap",
                    format!("{} samples is shorter than the step memory of {mem} samples", self.overlap),
                ));
            }
            if mem >= self.fft_block as usize {
                return Err(Error::param("fft_block", "step filter longer than the FFT block"));
            }
        }
        Ok(())
    }

    /// Fill `overlap` with the step memory and pick the power-of-two FFT
    /// block minimizing the linear-step cost per output sample.
    pub fn with_tuned_blocks(mut self, link: &LinkConfig, symbol_rate: f64) -> Self {
        let mem = step_memory_samples(link, &self, symbol_rate);
        self.overlap = mem as u32;
        let mut best = (f64::INFINITY, 0u32);
        for log2n in 2..=20u32 {
            let n = 1usize << log2n;
            if n <= mem {
                continue;
            }
            let cost = linear_cost_per_sample(n, mem);
            if cost < best.0 {
                best = (cost, n as u32);
            }
        }
        self.fft_block = best.1;
        self
    }

    /// Step grid over the link for this configuration.
    pub fn steps(&self, link: &LinkConfig) -> Vec<Step> {
        splitstep::link_steps(
            link,
            self.n_steps as usize,
            self.spacing == Spacing::Logarithmic,
            self.split_ratio,
        )
    }
}

pub fn ssfm_equivalent(n_coeffs: u32) -> Vec<f64> {
    let mut c = vec![0.0; n_coeffs as usize + 1];
    c[0] = 1.0;
    c
}

/// Dispersion memory of one step in samples: the impulse response of
/// `exp(j beta2/2 w^2 h)` over a band `B = fs` spans `2 pi |beta2| h B`
/// seconds, i.e. `ceil(2 pi |beta2| h fs^2)` samples. With zero steps the
/// whole link is one step.
pub fn step_memory_samples(link: &LinkConfig, cfg: &DbpConfig, symbol_rate: f64) -> usize {
    let fs = symbol_rate * cfg.samples_per_symbol.as_f64();
    let h = link.total_m() / cfg.n_steps.max(1) as f64;
    (2.0 * std::f64::consts::PI * link.beta2().abs() * h * fs * fs).ceil() as usize
}

/// Real multiplications per output sample of one overlap-save pass: FFT and
/// IFFT of size `n` at `(n/2) log2 n` complex multiplies each, plus `n`
/// pointwise complex multiplies, all at 4 real multiplies per complex one.
fn linear_cost_per_sample(n: usize, overlap: usize) -> f64 {
    let nf = n as f64;
    let fft = 2.0 * (nf / 2.0) * nf.log2() * RM_PER_COMPLEX_MULT;
    let pointwise = nf * RM_PER_COMPLEX_MULT;
    (fft + pointwise) / (nf - overlap as f64)
}

/// Real multiplies per complex multiply in the cost model.
pub const RM_PER_COMPLEX_MULT: f64 = 4.0;
/// Real multiplies for `|x|^2` per polarization sample.
pub const RM_POWER: f64 = 2.0;
/// Real multiplies to apply a table-driven phase rotation.
pub const RM_ROTATION: f64 = 4.0;

/// Cost breakdown in real multiplications per 2D symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub rm_per_2d: f64,
    pub fft: f64,
    pub pointwise: f64,
    pub power_filter: f64,
    pub power: f64,
    pub rotation: f64,
    pub rm_per_complex_mult: f64,
    pub fft_law: String,
}

/// Real multiplications per 2D symbol under the declared cost model.
///
/// Each step costs one overlap-save linear pass per polarization plus the
/// nonlinear stage: `2` multiplies for the power of each polarization,
/// `2 Nc + 1` for the power filter (shared by the two polarizations) and
/// `4` to apply the rotation. Per-sample costs are scaled by the
/// oversampling factor. With zero steps a single linear pass is counted.
pub fn complexity_rm2d(cfg: &DbpConfig) -> ComplexityReport {
    let sps = cfg.samples_per_symbol.as_f64();
    let n = cfg.fft_block.max(2) as f64;
    let useful = (n - cfg.overlap as f64).max(1.0);
    let passes = cfg.n_steps.max(1) as f64;
    let fft = passes * sps * 2.0 * (n / 2.0) * n.log2() * RM_PER_COMPLEX_MULT / useful;
    let pointwise = passes * sps * n * RM_PER_COMPLEX_MULT / useful;
    let (power_filter, power, rotation) = if cfg.engine == EngineKind::Cdc || cfg.n_steps == 0 {
        (0.0, 0.0, 0.0)
    } else {
        let steps = cfg.n_steps as f64;
        let taps = match cfg.engine {
            EngineKind::Essfm | EngineKind::CbEssfm => 2.0 * cfg.n_coeffs as f64 + 1.0,
            _ => 1.0,
        };
        (
            steps * sps * taps / 2.0,
            steps * sps * RM_POWER,
            steps * sps * RM_ROTATION,
        )
    };
    ComplexityReport {
        rm_per_2d: fft + pointwise + power_filter + power + rotation,
        fft,
        pointwise,
        power_filter,
        power,
        rotation,
        rm_per_complex_mult: RM_PER_COMPLEX_MULT,
        fft_law: "(N/2) log2 N complex multiplies".into(),
    }
}

/// Full-link chromatic dispersion compensation.
pub fn cdc(sig: &Signal, link: &LinkConfig) -> Result<Signal> {
    link.validate()?;
    let mut out = sig.clone();
    Engine::new(link).disperse(&mut out, -link.total_m());
    Ok(out)
}

/// Backpropagate over an explicit forward step grid with the given taps.
pub fn backpropagate(sig: &Signal, link: &LinkConfig, steps: &[Step], taps: &[f64]) -> Signal {
    let mut out = sig.clone();
    Engine::new(link).run(&mut out, steps, Direction::Backward, taps);
    out
}

/// Split-step digital backpropagation.
pub fn dbp_ssfm(sig: &Signal, link: &LinkConfig, cfg: &DbpConfig) -> Result<Signal> {
    if cfg.engine != EngineKind::Ssfm {
        return Err(Error::param("engine", "dbp_ssfm needs the ssfm engine"));
    }
    link.validate()?;
    cfg.validate()?;
    Ok(backpropagate(sig, link, &cfg.steps(link), &[1.0]))
}

/// Enhanced split-step backpropagation with a shared power filter.
pub fn essfm_backprop(sig: &Signal, link: &LinkConfig, cfg: &DbpConfig) -> Result<Signal> {
    if !matches!(cfg.engine, EngineKind::Essfm | EngineKind::CbEssfm) {
        return Err(Error::param("engine", "essfm_backprop needs the essfm or cb_essfm engine"));
    }
    link.validate()?;
    cfg.validate()?;
    let taps = cfg.taps()?;
    Ok(backpropagate(sig, link, &cfg.steps(link), &taps))
}

/// Run whichever engine the configuration selects.
pub fn equalize(sig: &Signal, link: &LinkConfig, cfg: &DbpConfig) -> Result<Signal> {
    match cfg.engine {
        EngineKind::Cdc => cdc(sig, link),
        EngineKind::Ssfm => dbp_ssfm(sig, link, cfg),
        EngineKind::Essfm | EngineKind::CbEssfm => essfm_backprop(sig, link, cfg),
    }
}

/// Low-complexity forward model: the same step structure as the configured
/// engine run in the propagation direction, noiseless.
pub fn forward_model(sig: &Signal, link: &LinkConfig, cfg: &DbpConfig) -> Result<Signal> {
    link.validate()?;
    cfg.validate()?;
    let mut out = sig.clone();
    let mut engine = Engine::new(link);
    if cfg.engine == EngineKind::Cdc || cfg.n_steps == 0 {
        engine.disperse(&mut out, link.total_m());
    } else {
        let taps = cfg.taps()?;
        engine.run(&mut out, &cfg.steps(link), Direction::Forward, &taps);
    }
    Ok(out)
}

/// Normalized mean-square error after the best complex scalar gain, per
/// polarization and averaged: `1 - |<r, t>|^2 / (|r|^2 |t|^2)`. This is the
/// error left after removing the mean phase and a common amplitude scale.
pub fn aligned_nmse(rx: &Symbols, tx: &Symbols) -> f64 {
    let one = |r: &[C64], t: &[C64]| {
        let cross: C64 = r.iter().zip(t).map(|(a, b)| a * b.conj()).sum();
        let er: f64 = r.iter().map(|v| v.norm_sqr()).sum();
        let et: f64 = t.iter().map(|v| v.norm_sqr()).sum();
        if er == 0.0 || et == 0.0 {
            return 1.0;
        }
        (1.0 - cross.norm_sqr() / (er * et)).max(0.0)
    };
    0.5 * (one(&rx.x, &tx.x) + one(&rx.y, &tx.y))
}

/// Outcome of ESSFM training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedEssfm {
    pub coeffs: Vec<f64>,
    pub split_ratio: f64,
    /// Aligned NMSE of the SSFM-equivalent starting point.
    pub initial_mse: f64,
    pub mse: f64,
    pub evaluations: usize,
    /// False when the evaluation budget ran out before the step sizes
    /// shrank below tolerance; the best point found is still returned.
    pub converged: bool,
}

/// Optimizer settings for [`train_essfm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub max_evaluations: usize,
    pub initial_step: f64,
    pub tolerance: f64,
    /// Train the split ratio as well (the coupled-band variant).
    pub train_split: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            max_evaluations: 400,
            initial_step: 0.1,
            tolerance: 2e-3,
            train_split: false,
        }
    }
}

/// Fit the shared power-filter taps (and, for `cb_essfm`, the split ratio)
/// by derivative-free coordinate descent on the aligned NMSE between the
/// backpropagated, matched-filtered symbols and the known transmitted ones.
pub fn train_essfm(
    tx_symbols: &Symbols,
    rx_signal: &Signal,
    link: &LinkConfig,
    cfg: &DbpConfig,
    pulse: &PulseConfig,
) -> Result<TrainedEssfm> {
    let opts = TrainOptions {
        train_split: cfg.engine == EngineKind::CbEssfm,
        ..TrainOptions::default()
    };
    train_essfm_with(tx_symbols, rx_signal, link, cfg, pulse, &opts)
}

pub fn train_essfm_with(
    tx_symbols: &Symbols,
    rx_signal: &Signal,
    link: &LinkConfig,
    cfg: &DbpConfig,
    pulse: &PulseConfig,
    opts: &TrainOptions,
) -> Result<TrainedEssfm> {
    if tx_symbols.len() < 1 << 14 {
        return Err(Error::param("tx_symbols", "training needs at least 2^14 symbols"));
    }
    if !matches!(cfg.engine, EngineKind::Essfm | EngineKind::CbEssfm) {
        return Err(Error::param("engine", "training applies to essfm and cb_essfm"));
    }
    link.validate()?;
    let nc = cfg.n_coeffs as usize;
    let mut engine = Engine::new(link);
    let evaluations = std::cell::Cell::new(0usize);
    let mut eval = |params: &[f64]| -> Result<f64> {
        evaluations.set(evaluations.get() + 1);
        let (taps, split) = params.split_at(nc + 1);
        let split = split.first().copied().unwrap_or(cfg.split_ratio);
        let steps = splitstep::link_steps(link, cfg.n_steps as usize, cfg.spacing == Spacing::Logarithmic, split);
        let mut sig = rx_signal.clone();
        engine.run(&mut sig, &steps, Direction::Backward, taps);
        let rx = matched_filter_sample(&sig, pulse)?;
        if rx.len() != tx_symbols.len() {
            return Err(Error::LengthMismatch {
                what: "training symbols",
                expected: rx.len(),
                got: tx_symbols.len(),
            });
        }
        Ok(aligned_nmse(&rx, tx_symbols))
    };

    let mut params = ssfm_equivalent(cfg.n_coeffs);
    if opts.train_split {
        params.push(0.5);
    }
    let mut best = eval(&params)?;
    let initial_mse = best;
    let mut steps: Vec<f64> = (0..params.len()).map(|_| opts.initial_step).collect();
    let mut converged = false;
    'outer: loop {
        let mut improved = false;
        for i in 0..params.len() {
            for dir in [1.0, -1.0] {
                loop {
                    let mut trial = params.clone();
                    trial[i] += dir * steps[i];
                    if opts.train_split && i == params.len() - 1 {
                        trial[i] = trial[i].clamp(0.0, 1.0);
                        if trial[i] == params[i] {
                            break;
                        }
                    }
                    if evaluations.get() >= opts.max_evaluations {
                        break 'outer;
                    }
                    let v = eval(&trial)?;
                    if v < best {
                        best = v;
                        params = trial;
                        improved = true;
                    } else {
                        break;
                    }
                }
            }
        }
        if !improved {
            steps.iter_mut().for_each(|s| *s *= 0.5);
            if steps.iter().all(|s| *s < opts.tolerance) {
                converged = true;
                break;
            }
        }
    }
    let split_ratio = if opts.train_split {
        params.pop().expect("split parameter")
    } else {
        cfg.split_ratio
    };
    Ok(TrainedEssfm {
        coeffs: params,
        split_ratio,
        initial_mse,
        mse: best,
        evaluations: evaluations.get(),
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ssfm_forward, StepPlan};
    use crate::signal::{nmse_signal, rrc_shape, set_power, Constellation};
    use rand::{Rng, SeedableRng};

    fn link() -> LinkConfig {
        LinkConfig { n_spans: 3, ase: false, ..Default::default() }
    }

    fn launch(n: usize, p_dbm: f64) -> Signal {
        let c = Constellation::uniform_qam(64).unwrap();
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let x = (0..n).map(|_| c.points[r.random_range(0..64)]).collect();
        let y = (0..n).map(|_| c.points[r.random_range(0..64)]).collect();
        let s = Symbols::new(x, y).unwrap();
        set_power(&rrc_shape(&s, &PulseConfig::default()).unwrap(), p_dbm).unwrap()
    }

    #[test]
    fn cdc_of_zero_dispersion_is_identity() {
        let sig = launch(256, 0.0);
        let l = LinkConfig { disp_ps_nm_km: 0.0, ..link() };
        assert!(nmse_signal(&cdc(&sig, &l).unwrap(), &sig) < 1e-28);
    }

    #[test]
    fn cdc_inverts_linear_propagation() {
        let sig = launch(1024, 0.0);
        let l = link().linear();
        let rx = ssfm_forward(&sig, &l, &StepPlan { steps_per_span: 4, ..Default::default() }, 0).unwrap();
        let eq = cdc(&rx, &l).unwrap();
        assert!(nmse_signal(&eq, &sig) < 1e-10);
        assert!(((eq.energy() - rx.energy()) / rx.energy()).abs() < 1e-10);
    }

    #[test]
    fn cdc_tone_phase() {
        let l = LinkConfig { n_spans: 30, ..Default::default() };
        let n = 1000;
        let fs = 100e9;
        let f0 = 5e9;
        let x: Vec<C64> = (0..n)
            .map(|k| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * f0 * k as f64 / fs))
            .collect();
        let sig = Signal::new(x.clone(), x, fs).unwrap();
        let out = cdc(&sig, &l).unwrap();
        let w = 2.0 * std::f64::consts::PI * f0;
        let expect = -0.5 * l.beta2() * w * w * l.total_m();
        let got = (out.x[0] / sig.x[0]).arg();
        let diff = (got - expect).rem_euclid(2.0 * std::f64::consts::PI);
        assert!(diff < 1e-6 || diff > 2.0 * std::f64::consts::PI - 1e-6, "{got} vs {expect}");
    }

    #[test]
    fn ssfm_dbp_inverts_same_grid_forward() {
        let l = link();
        let plan = StepPlan { steps_per_span: 5, spacing: Spacing::Logarithmic, split_ratio: 0.5 };
        let sig = launch(2048, 6.0);
        let rx = ssfm_forward(&sig, &l, &plan, 0).unwrap();
        assert!(nmse_signal(&cdc(&rx, &l).unwrap(), &sig) > 1e-4);
        let cfg = DbpConfig { spacing: Spacing::Logarithmic, ..DbpConfig::ssfm(15) };
        let back = dbp_ssfm(&rx, &l, &cfg).unwrap();
        assert!(nmse_signal(&back, &sig) < 1e-9);
    }

    #[test]
    fn linear_dbp_equals_cdc() {
        let l = link().linear();
        let sig = launch(512, 0.0);
        let a = dbp_ssfm(&sig, &l, &DbpConfig::ssfm(9)).unwrap();
        let b = cdc(&sig, &l).unwrap();
        assert!(nmse_signal(&a, &b) < 1e-10);
        let zero = DbpConfig { coeffs: vec![0.0; 5], ..DbpConfig::essfm(9, 4) };
        let c = essfm_backprop(&sig, &link(), &zero).unwrap();
        assert!(nmse_signal(&c, &b) < 1e-10);
    }

    #[test]
    fn essfm_with_unit_tap_is_ssfm() {
        let l = link();
        let sig = launch(512, 4.0);
        let a = dbp_ssfm(&sig, &l, &DbpConfig::ssfm(6)).unwrap();
        for nc in [0, 3] {
            let b = essfm_backprop(&sig, &l, &DbpConfig::essfm(6, nc)).unwrap();
            assert!(nmse_signal(&b, &a) < 1e-24);
        }
    }

    #[test]
    fn essfm_rejects_bad_coefficients() {
        let cfg = DbpConfig { coeffs: vec![1.0, 0.0], ..DbpConfig::essfm(6, 3) };
        assert!(essfm_backprop(&launch(64, 0.0), &link(), &cfg).is_err());
        assert!(dbp_ssfm(&launch(64, 0.0), &link(), &DbpConfig::essfm(6, 3)).is_err());
    }

    #[test]
    fn complexity_grows_with_steps_and_taps() {
        let l = LinkConfig::default();
        let rs = 46.5e9;
        let cdc_cost = complexity_rm2d(&DbpConfig::cdc().with_tuned_blocks(&l, rs));
        assert_eq!(cdc_cost.power + cdc_cost.rotation + cdc_cost.power_filter, 0.0);
        assert!(cdc_cost.rm_per_2d > 0.0);
        let base = DbpConfig::cb_essfm(30, 8).with_tuned_blocks(&l, rs);
        let r = complexity_rm2d(&base);
        assert_eq!(r, complexity_rm2d(&base));
        let more_steps = DbpConfig { n_steps: 60, ..base.clone() };
        assert!(complexity_rm2d(&more_steps).rm_per_2d > r.rm_per_2d);
        let more_taps = DbpConfig { n_coeffs: 9, coeffs: ssfm_equivalent(9), ..base.clone() };
        assert!(complexity_rm2d(&more_taps).rm_per_2d > r.rm_per_2d);
        assert!(base.validate_for(&l, rs).is_ok());
        let short = DbpConfig { overlap: 1, ..base };
        assert!(short.validate_for(&l, rs).is_err());
    }
}
