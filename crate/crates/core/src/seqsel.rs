//! Sequence selection by bit scrambling: each frame of information bits is
//! scrambled with `Nt` fixed masks, every scrambled version is shaped, and
//! the candidate with the lowest metric is transmitted. The scramble index
//! travels in the first `log2 Nt` bits of the shaped frame.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ssfm_forward, LinkConfig, Spacing, StepPlan};
use crate::dbp::{self, DbpConfig};
use crate::error::{Error, Result};
use crate::rng::{self, Role};
use crate::rxdsp::mean_phase_remove;
use crate::shaping::ShapingCodec;
use crate::signal::{dbm_to_watts, matched_filter_sample, rrc_shape, Oversampling, PulseConfig, Symbols};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    NliCbessfm,
    NliIdeal,
    EnergyVar,
}

fn default_window() -> usize {
    16
}

fn default_ideal_steps() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub n_candidates: usize,
    pub seq_len_4d: usize,
    pub metric: SelectionMetric,
    /// Reduced forward model for `nli_cbessfm`.
    pub metric_model: DbpConfig,
    /// Previously transmitted symbols prepended in the NLI metric.
    pub context_len_4d: usize,
    /// Window of `energy_var`, in 4D symbols.
    #[serde(default = "default_window")]
    pub energy_window: usize,
    /// Steps per span of the fine model behind `nli_ideal` (2 samples per
    /// symbol, logarithmic spacing).
    #[serde(default = "default_ideal_steps")]
    pub ideal_steps_per_span: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            n_candidates: 256,
            seq_len_4d: 512,
            metric: SelectionMetric::NliCbessfm,
            metric_model: DbpConfig::cb_essfm(30, 0),
            context_len_4d: 512,
            energy_window: default_window(),
            ideal_steps_per_span: default_ideal_steps(),
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_candidates == 0 || !self.n_candidates.is_power_of_two() {
            return Err(Error::param("n_candidates", "must be a power of two"));
        }
        if self.seq_len_4d == 0 {
            return Err(Error::param("seq_len_4d", "must be positive"));
        }
        if self.energy_window == 0 {
            return Err(Error::param("energy_window", "must be positive"));
        }
        if self.ideal_steps_per_span == 0 {
            return Err(Error::param("ideal_steps_per_span", "must be positive"));
        }
        self.metric_model.validate()
    }

    pub fn index_bits(&self) -> usize {
        self.n_candidates.trailing_zeros() as usize
    }

    /// Forward model behind the configured NLI metric.
    pub fn nli_model(&self, base: &PulseConfig) -> NliModel {
        match self.metric {
            SelectionMetric::NliIdeal => NliModel {
                pulse: base.with_sps(Oversampling::new(2, 1)),
                engine: ModelEngine::Fine(StepPlan {
                    steps_per_span: self.ideal_steps_per_span as u32,
                    spacing: Spacing::Logarithmic,
                    split_ratio: 0.5,
                }),
            },
            _ => NliModel {
                pulse: base.with_sps(self.metric_model.samples_per_symbol),
                engine: ModelEngine::Reduced(self.metric_model.clone()),
            },
        }
    }
}

/// `log2(Nt) / n` bits per 4D symbol.
pub fn rate_loss(cfg: &SelectionConfig) -> f64 {
    cfg.index_bits() as f64 / cfg.seq_len_4d as f64
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelEngine {
    Reduced(DbpConfig),
    Fine(StepPlan),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NliModel {
    pub pulse: PulseConfig,
    pub engine: ModelEngine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub candidates: Vec<Symbols>,
    /// Chosen candidate, set by [`select`].
    pub scramble_index: usize,
    /// One metric per candidate; empty until evaluated.
    pub metrics: Vec<f64>,
}

/// Scramble mask `i`; mask 0 is all zeros.
pub fn scramble_mask(master_seed: u64, i: usize, len: usize) -> Vec<u8> {
    if i == 0 {
        return vec![0; len];
    }
    use rand::Rng;
    let mut r = rng::stream(master_seed, Role::ScrambleMask, i as u32);
    (0..len).map(|_| r.random_range(0..2u8)).collect()
}

/// Information bits per frame when the scramble index is carried in-band.
pub fn info_bits_per_frame(codec: &ShapingCodec, sel: &SelectionConfig) -> Result<usize> {
    let total = codec.frame_bits(sel.seq_len_4d)?;
    total
        .checked_sub(sel.index_bits())
        .ok_or_else(|| Error::InfeasibleRate("frame too short for the scramble index".into()))
}

/// Shape the `Nt` scrambled versions of one frame: candidate `i` encodes
/// `[i in log2 Nt bits] ++ (info_bits xor mask_i)`.
pub fn generate_candidates(
    info_bits: &[u8],
    codec: &ShapingCodec,
    sel: &SelectionConfig,
    master_seed: u64,
) -> Result<CandidateSet> {
    sel.validate()?;
    let need = info_bits_per_frame(codec, sel)?;
    if info_bits.len() != need {
        return Err(Error::LengthMismatch {
            what: "selection frame bits",
            expected: need,
            got: info_bits.len(),
        });
    }
    let candidates = (0..sel.n_candidates)
        .into_par_iter()
        .map(|i| candidate(info_bits, i, codec, sel, master_seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(CandidateSet {
        candidates,
        scramble_index: 0,
        metrics: Vec::new(),
    })
}

fn candidate(info_bits: &[u8], i: usize, codec: &ShapingCodec, sel: &SelectionConfig, master_seed: u64) -> Result<Symbols> {
    let ib = sel.index_bits();
    let mask = scramble_mask(master_seed, i, info_bits.len());
    let bits: Vec<u8> = (0..ib)
        .rev()
        .map(|b| ((i >> b) & 1) as u8)
        .chain(info_bits.iter().zip(&mask).map(|(a, m)| a ^ m))
        .collect();
    codec.encode_frame(&bits, sel.seq_len_4d, master_seed).map(|f| f.symbols_4d)
}

/// Re-encode a stream from known per-frame scramble indices.
pub fn rebuild_stream(
    info_bits: &[u8],
    codec: &ShapingCodec,
    sel: &SelectionConfig,
    master_seed: u64,
    indices: &[usize],
) -> Result<Symbols> {
    let per = info_bits_per_frame(codec, sel)?;
    if info_bits.len() != per * indices.len() {
        return Err(Error::LengthMismatch {
            what: "selection stream bits",
            expected: per * indices.len(),
            got: info_bits.len(),
        });
    }
    let mut out = Symbols::zeros(0);
    for (frame, &i) in info_bits.chunks(per).zip(indices) {
        if i >= sel.n_candidates {
            return Err(Error::IndexOutOfRange(format!("scramble index {i} of {}", sel.n_candidates)));
        }
        out.extend_from(&candidate(frame, i, codec, sel, master_seed)?);
    }
    Ok(out)
}

/// Recover the scramble index and information bits from a noiseless frame.
pub fn descramble(symbols: &Symbols, codec: &ShapingCodec, sel: &SelectionConfig, master_seed: u64) -> Result<(usize, Vec<u8>)> {
    let bits = codec.decode_frame(symbols)?;
    let ib = sel.index_bits();
    let idx = bits[..ib].iter().fold(0usize, |acc, b| (acc << 1) | *b as usize);
    let mask = scramble_mask(master_seed, idx, bits.len() - ib);
    Ok((idx, bits[ib..].iter().zip(&mask).map(|(a, m)| a ^ m).collect()))
}

/// Noiseless propagation error of `seq` launched after `context`: shape,
/// scale to `power_dbm`, run the forward model, compensate dispersion,
/// matched-filter, remove the mean phase over `seq` and sum `|y - s|^2`
/// over `seq`.
pub fn metric_nli(seq: &Symbols, context: Option<&Symbols>, link: &LinkConfig, power_dbm: f64, model: &NliModel) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::EmptyInput("sequence"));
    }
    let block = match context {
        Some(c) if !c.is_empty() => Symbols::concat(&[c, seq]),
        _ => seq.clone(),
    };
    let amp = (dbm_to_watts(power_dbm) / 2.0).sqrt();
    let mut sig = rrc_shape(&block, &model.pulse)?;
    sig.scale(amp);
    let link = LinkConfig { ase: false, ..link.clone() };
    let out = match &model.engine {
        ModelEngine::Reduced(cfg) => dbp::forward_model(&sig, &link, cfg)?,
        ModelEngine::Fine(plan) => ssfm_forward(&sig, &link, plan, 0)?,
    };
    let eq = dbp::cdc(&out, &link)?;
    let y = matched_filter_sample(&eq, &model.pulse)?.scaled(1.0 / amp);
    let start = block.len() - seq.len();
    let y = mean_phase_remove(&y.slice(start..block.len()), seq)?;
    Ok(y.x
        .iter()
        .zip(&seq.x)
        .chain(y.y.iter().zip(&seq.y))
        .map(|(a, b)| (a - b).norm_sqr())
        .sum())
}

/// Variance over window positions of the mean 4D energy in a sliding
/// window of `window_len` symbols.
pub fn metric_energy_var(seq: &Symbols, window_len: usize) -> Result<f64> {
    if window_len == 0 {
        return Err(Error::param("window_len", "must be positive"));
    }
    let e = seq.energies_4d();
    if e.len() < window_len {
        return Err(Error::param("window_len", "longer than the sequence"));
    }
    let mut acc: f64 = e[..window_len].iter().sum();
    let mut means = vec![acc / window_len as f64];
    for k in window_len..e.len() {
        acc += e[k] - e[k - window_len];
        means.push(acc / window_len as f64);
    }
    let m = means.iter().sum::<f64>() / means.len() as f64;
    Ok(means.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / means.len() as f64)
}

/// Everything a metric needs besides the candidate itself.
#[derive(Debug, Clone)]
pub struct MetricEnv {
    pub link: LinkConfig,
    pub power_dbm: f64,
    pub pulse: PulseConfig,
}

/// Fill `set.metrics` with the configured metric.
pub fn evaluate(set: &mut CandidateSet, context: Option<&Symbols>, sel: &SelectionConfig, env: &MetricEnv) -> Result<()> {
    let model = sel.nli_model(&env.pulse);
    set.metrics = set
        .candidates
        .par_iter()
        .map(|c| match sel.metric {
            SelectionMetric::EnergyVar => metric_energy_var(c, sel.energy_window),
            _ => metric_nli(c, context, &env.link, env.power_dbm, &model),
        })
        .collect::<Result<_>>()?;
    Ok(())
}

/// Index of the smallest metric, ties to the lowest index.
pub fn select(set: &mut CandidateSet) -> Result<(usize, &Symbols)> {
    if set.candidates.is_empty() || set.metrics.len() != set.candidates.len() {
        return Err(Error::EmptyInput("evaluated candidate set"));
    }
    let mut best = 0;
    for (i, m) in set.metrics.iter().enumerate() {
        if m.total_cmp(&set.metrics[best]).is_lt() {
            best = i;
        }
    }
    set.scramble_index = best;
    Ok((best, &set.candidates[best]))
}

/// Result of running selection over a stream of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub symbols: Symbols,
    pub indices: Vec<usize>,
    pub selected_metrics: Vec<f64>,
    /// Metric of candidate 0 (plain shaping) for each frame.
    pub baseline_metrics: Vec<f64>,
}

/// Select frame by frame; each frame's metric sees the tail of the
/// previously selected frame as context.
pub fn select_stream(
    info_bits: &[u8],
    codec: &ShapingCodec,
    sel: &SelectionConfig,
    env: &MetricEnv,
    master_seed: u64,
) -> Result<SelectionOutcome> {
    let per = info_bits_per_frame(codec, sel)?;
    if info_bits.is_empty() || info_bits.len() % per != 0 {
        return Err(Error::LengthMismatch {
            what: "selection stream bits",
            expected: per * (info_bits.len() / per).max(1),
            got: info_bits.len(),
        });
    }
    let mut symbols = Symbols::zeros(0);
    let mut out = SelectionOutcome {
        symbols: Symbols::zeros(0),
        indices: Vec::new(),
        selected_metrics: Vec::new(),
        baseline_metrics: Vec::new(),
    };
    let mut context: Option<Symbols> = None;
    for frame in info_bits.chunks(per) {
        let mut set = generate_candidates(frame, codec, sel, master_seed)?;
        evaluate(&mut set, context.as_ref(), sel, env)?;
        let base = set.metrics[0];
        let (i, chosen) = select(&mut set)?;
        let chosen = chosen.clone();
        out.indices.push(i);
        out.selected_metrics.push(set.metrics[i]);
        out.baseline_metrics.push(base);
        let keep = sel.context_len_4d.min(chosen.len());
        context = (keep > 0).then(|| chosen.slice(chosen.len() - keep..chosen.len()));
        symbols.extend_from(&chosen);
        log::debug!("frame {}: candidate {i} metric {:.4e} vs {base:.4e}", out.indices.len() - 1, out.selected_metrics.last().unwrap());
    }
    out.symbols = symbols;
    Ok(out)
}
