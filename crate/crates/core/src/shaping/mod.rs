//! Constellation shaping: distribution matchers (enumerative sphere shaping,
//! constant composition, i.i.d. Maxwell-Boltzmann sampling) and the PAS
//! framing that turns amplitude blocks and sign bits into DP-QAM symbols.

pub mod ccdm;
pub mod ess;
pub mod mb;
pub mod pas;

use std::path::Path;

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{entropy_bits, Constellation, Symbols};

pub use ccdm::{composition_for, Ccdm};
pub use ess::{ess_min_emax, EssTrellis};
pub use mb::{mb_fit_nu, mb_pmf, mb_sample};
pub use pas::{pas_demap_hard, pas_map, Pas};

/// Positive half-axis amplitude levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmplitudeAlphabet {
    pub amplitudes: Vec<u32>,
}

impl Default for AmplitudeAlphabet {
    fn default() -> Self {
        AmplitudeAlphabet {
            amplitudes: vec![1, 3, 5, 7],
        }
    }
}

impl AmplitudeAlphabet {
    pub fn new(amplitudes: Vec<u32>) -> Result<Self> {
        let a = AmplitudeAlphabet { amplitudes };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.amplitudes.is_empty() || self.amplitudes.len() > 16 {
            return Err(Error::param("alphabet", "needs 1 to 16 amplitudes"));
        }
        if self.amplitudes[0] == 0 || self.amplitudes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("alphabet", "amplitudes must be positive and strictly increasing"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn energies(&self) -> Vec<u64> {
        self.amplitudes.iter().map(|&a| a as u64 * a as u64).collect()
    }

    /// Whether the levels are 1, 3, 5, ... as on a square QAM axis.
    pub fn is_odd_ladder(&self) -> bool {
        self.amplitudes.iter().enumerate().all(|(i, &a)| a == 2 * i as u32 + 1)
    }

    pub fn position(&self, a: u32) -> Result<usize> {
        self.amplitudes
            .iter()
            .position(|&v| v == a)
            .ok_or_else(|| Error::param("amplitude", format!("{a} is not in the alphabet")))
    }

    pub fn energy_of(&self, block: &[u32]) -> Result<u64> {
        let mut e = 0u64;
        for &a in block {
            self.position(a)?;
            e += a as u64 * a as u64;
        }
        Ok(e)
    }

    pub fn nearest(&self, v: f64) -> u32 {
        *self
            .amplitudes
            .iter()
            .min_by(|a, b| (**a as f64 - v).abs().total_cmp(&(**b as f64 - v).abs()))
            .expect("alphabet")
    }
}

/// MSB-first bits to an integer.
pub(crate) fn bits_to_index(bits: &[u8]) -> Result<BigUint> {
    if bits.iter().any(|b| *b > 1) {
        return Err(Error::param("bits", "values must be 0 or 1"));
    }
    let pad = (8 - bits.len() % 8) % 8;
    let bytes: Vec<u8> = std::iter::repeat_n(0u8, pad)
        .chain(bits.iter().copied())
        .collect::<Vec<_>>()
        .chunks(8)
        .map(|c| c.iter().fold(0u8, |acc, b| (acc << 1) | b))
        .collect();
    Ok(BigUint::from_bytes_be(&bytes))
}

/// The low `k` bits of `idx`, MSB first.
pub(crate) fn index_to_bits(idx: &BigUint, k: usize) -> Vec<u8> {
    (0..k).rev().map(|i| idx.bit(i as u64) as u8).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DmKind {
    Ccdm,
    Ess,
    MbIid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmConfig {
    pub kind: DmKind,
    /// Amplitudes per block.
    pub block_len: usize,
    /// Input bits per block; for `mb_iid`, `k_bits / block_len` is the
    /// target amplitude entropy when `nu` is not given.
    pub k_bits: usize,
    /// Energy bound for `ess`; the smallest feasible one when absent.
    #[serde(default)]
    pub e_max: Option<u64>,
    /// Amplitude counts for `ccdm`; an MB-like composition when absent.
    #[serde(default)]
    pub composition: Option<Vec<usize>>,
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub alphabet: AmplitudeAlphabet,
}

impl DmConfig {
    pub fn ess(block_len: usize, k_bits: usize) -> Self {
        DmConfig {
            kind: DmKind::Ess,
            block_len,
            k_bits,
            e_max: None,
            composition: None,
            nu: None,
            alphabet: AmplitudeAlphabet::default(),
        }
    }

    pub fn ccdm(block_len: usize, k_bits: usize) -> Self {
        DmConfig {
            kind: DmKind::Ccdm,
            ..DmConfig::ess(block_len, k_bits)
        }
    }

    pub fn mb_iid(block_len: usize, k_bits: usize) -> Self {
        DmConfig {
            kind: DmKind::MbIid,
            ..DmConfig::ess(block_len, k_bits)
        }
    }

    /// Amplitude bits per block for a target 4D rate: `(rate - 4) / 4`
    /// bits per amplitude, floored to whole bits per block.
    pub fn k_bits_for_rate(block_len: usize, rate_4d: f64) -> usize {
        ((rate_4d - 4.0) / 4.0 * block_len as f64 + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.alphabet.validate()?;
        if self.block_len == 0 {
            return Err(Error::param("block_len", "must be positive"));
        }
        let cap = self.block_len as f64 * (self.alphabet.len() as f64).log2();
        if self.k_bits as f64 > cap + 1e-12 {
            return Err(Error::InfeasibleRate(format!("{} bits per block exceed {cap}", self.k_bits)));
        }
        if let Some(c) = &self.composition {
            if c.iter().sum::<usize>() != self.block_len {
                return Err(Error::param("composition", "must sum to block_len"));
            }
        }
        if let Some(nu) = self.nu {
            if nu.is_nan() || nu < 0.0 {
                return Err(Error::param("nu", "must be non-negative"));
            }
        }
        Ok(())
    }
}

/// A distribution matcher built from a [`DmConfig`].
#[derive(Debug, Clone)]
pub enum Dm {
    Ess { trellis: EssTrellis, k_bits: usize },
    Ccdm { ccdm: Ccdm, k_bits: usize },
    MbIid { alphabet: AmplitudeAlphabet, nu: f64, block_len: usize },
}

impl Dm {
    /// Build the matcher, loading the ESS trellis from `cache_dir` when given.
    pub fn new(cfg: &DmConfig, cache_dir: Option<&Path>) -> Result<Self> {
        cfg.validate()?;
        let al = &cfg.alphabet;
        Ok(match cfg.kind {
            DmKind::Ess => {
                let e_max = match cfg.e_max {
                    Some(e) => e,
                    None => ess_min_emax(al, cfg.block_len, cfg.k_bits)?,
                };
                let trellis = match cache_dir {
                    Some(d) => EssTrellis::cached(d, al, cfg.block_len, e_max)?,
                    None => EssTrellis::new(al, cfg.block_len, e_max)?,
                };
                if trellis.max_bits() < cfg.k_bits as u64 {
                    return Err(Error::InfeasibleRate(format!(
                        "e_max {e_max} admits only {} bits",
                        trellis.max_bits()
                    )));
                }
                Dm::Ess { trellis, k_bits: cfg.k_bits }
            }
            DmKind::Ccdm => {
                let composition = match &cfg.composition {
                    Some(c) => c.clone(),
                    None => ccdm_composition_for_bits(al, cfg.block_len, cfg.k_bits)?,
                };
                let ccdm = Ccdm::new(al, composition)?;
                if ccdm.max_bits() < cfg.k_bits as u64 {
                    return Err(Error::InfeasibleRate(format!(
                        "composition admits only {} bits",
                        ccdm.max_bits()
                    )));
                }
                Dm::Ccdm { ccdm, k_bits: cfg.k_bits }
            }
            DmKind::MbIid => {
                let nu = match cfg.nu {
                    Some(nu) => nu,
                    None => mb_fit_nu(al, cfg.k_bits as f64 / cfg.block_len as f64)?,
                };
                Dm::MbIid {
                    alphabet: al.clone(),
                    nu,
                    block_len: cfg.block_len,
                }
            }
        })
    }

    pub fn alphabet(&self) -> &AmplitudeAlphabet {
        match self {
            Dm::Ess { trellis, .. } => &trellis.alphabet,
            Dm::Ccdm { ccdm, .. } => &ccdm.alphabet,
            Dm::MbIid { alphabet, .. } => alphabet,
        }
    }

    pub fn block_len(&self) -> usize {
        match self {
            Dm::Ess { trellis, .. } => trellis.block_len,
            Dm::Ccdm { ccdm, .. } => ccdm.block_len(),
            Dm::MbIid { block_len, .. } => *block_len,
        }
    }

    /// Information bits consumed per block (zero for the sampler).
    pub fn input_bits(&self) -> usize {
        match self {
            Dm::Ess { k_bits, .. } | Dm::Ccdm { k_bits, .. } => *k_bits,
            Dm::MbIid { .. } => 0,
        }
    }

    /// Amplitude bits per amplitude carried by the matcher; for the
    /// sampler this is the entropy of its distribution.
    pub fn rate_per_amplitude(&self) -> f64 {
        match self {
            Dm::MbIid { alphabet, nu, .. } => entropy_bits(&mb_pmf(alphabet, *nu)),
            _ => self.input_bits() as f64 / self.block_len() as f64,
        }
    }

    pub fn amplitude_pmf(&self) -> Result<Vec<f64>> {
        match self {
            Dm::Ess { trellis, k_bits } => trellis.amplitude_pmf(*k_bits),
            Dm::Ccdm { ccdm, .. } => Ok(ccdm.amplitude_pmf()),
            Dm::MbIid { alphabet, nu, .. } => Ok(mb_pmf(alphabet, *nu)),
        }
    }

    pub fn encode_block(&self, bits: &[u8]) -> Result<Vec<u32>> {
        match self {
            Dm::Ess { trellis, k_bits } => trellis.encode(bits, *k_bits),
            Dm::Ccdm { ccdm, k_bits } => ccdm.encode(bits, *k_bits),
            Dm::MbIid { .. } => Err(Error::param("kind", "mb_iid is a sampler and has no encoder")),
        }
    }

    pub fn decode_block(&self, block: &[u32]) -> Result<Vec<u8>> {
        match self {
            Dm::Ess { trellis, k_bits } => trellis.decode(block, *k_bits),
            Dm::Ccdm { ccdm, k_bits } => ccdm.decode(block, *k_bits),
            Dm::MbIid { .. } => Err(Error::param("kind", "mb_iid is a sampler and has no decoder")),
        }
    }
}

/// MB-shaped composition with the lowest energy reaching `k_bits`.
fn ccdm_composition_for_bits(al: &AmplitudeAlphabet, n: usize, k_bits: usize) -> Result<Vec<usize>> {
    let h_max = (al.len() as f64).log2();
    let mut h = (k_bits as f64 / n as f64).min(h_max);
    loop {
        let c = composition_for(&mb_pmf(al, mb_fit_nu(al, h)?), n);
        if ccdm::multinomial(&c).bits() > k_bits as u64 {
            return Ok(c);
        }
        if h >= h_max {
            return Err(Error::InfeasibleRate(format!("no composition of length {n} carries {k_bits} bits")));
        }
        h = (h + 1e-3).min(h_max);
    }
}

pub fn ess_encode(bits: &[u8], cfg: &DmConfig) -> Result<Vec<u32>> {
    if cfg.kind != DmKind::Ess {
        return Err(Error::param("kind", "expected ess"));
    }
    Dm::new(cfg, None)?.encode_block(bits)
}

pub fn ess_decode(amplitudes: &[u32], cfg: &DmConfig) -> Result<Vec<u8>> {
    if cfg.kind != DmKind::Ess {
        return Err(Error::param("kind", "expected ess"));
    }
    Dm::new(cfg, None)?.decode_block(amplitudes)
}

pub fn ccdm_encode(bits: &[u8], cfg: &DmConfig) -> Result<Vec<u32>> {
    if cfg.kind != DmKind::Ccdm {
        return Err(Error::param("kind", "expected ccdm"));
    }
    Dm::new(cfg, None)?.encode_block(bits)
}

pub fn ccdm_decode(amplitudes: &[u32], cfg: &DmConfig) -> Result<Vec<u8>> {
    if cfg.kind != DmKind::Ccdm {
        return Err(Error::param("kind", "expected ccdm"));
    }
    Dm::new(cfg, None)?.decode_block(amplitudes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapingFrame {
    pub info_bits: Vec<u8>,
    pub amplitude_blocks: Vec<Vec<u32>>,
    pub sign_bits: Vec<u8>,
    pub symbols_4d: Symbols,
    pub net_rate_bits_per_4d: f64,
}

/// DM plus PAS framing. A frame of `n` 4D symbols carries `4n / block_len`
/// amplitude blocks, each from `k_bits` information bits, followed by `4n`
/// sign bits taken directly from the information bits.
#[derive(Debug, Clone)]
pub struct ShapingCodec {
    pub dm: Dm,
    pub pas: Pas,
}

impl ShapingCodec {
    pub fn new(cfg: &DmConfig, cache_dir: Option<&Path>) -> Result<Self> {
        let dm = Dm::new(cfg, cache_dir)?;
        let pas = Pas::new(dm.alphabet(), &dm.amplitude_pmf()?)?;
        Ok(ShapingCodec { dm, pas })
    }

    pub fn constellation(&self) -> Result<Constellation> {
        self.pas.constellation()
    }

    /// Gross rate `4 + 4 k / block_len` bits per 4D symbol.
    pub fn rate_bits_per_4d(&self) -> f64 {
        4.0 + 4.0 * self.dm.rate_per_amplitude()
    }

    fn blocks_for(&self, n4d: usize) -> Result<usize> {
        let amps = 4 * n4d;
        if amps % self.dm.block_len() != 0 {
            return Err(Error::param(
                "n4d",
                format!("{amps} amplitudes are not a whole number of {}-blocks", self.dm.block_len()),
            ));
        }
        Ok(amps / self.dm.block_len())
    }

    pub fn frame_bits(&self, n4d: usize) -> Result<usize> {
        Ok(self.blocks_for(n4d)? * self.dm.input_bits() + 4 * n4d)
    }

    /// Encode one frame. `rng_seed` drives the amplitudes of the i.i.d.
    /// sampler and is ignored by the matchers.
    pub fn encode_frame(&self, info_bits: &[u8], n4d: usize, rng_seed: u64) -> Result<ShapingFrame> {
        let blocks = self.blocks_for(n4d)?;
        let need = self.frame_bits(n4d)?;
        if info_bits.len() != need {
            return Err(Error::LengthMismatch {
                what: "frame information bits",
                expected: need,
                got: info_bits.len(),
            });
        }
        let k = self.dm.input_bits();
        let (amp_bits, sign_bits) = info_bits.split_at(blocks * k);
        let amplitude_blocks: Vec<Vec<u32>> = match &self.dm {
            Dm::MbIid { alphabet, nu, block_len } => {
                let all = mb_sample(alphabet, *nu, blocks * block_len, rng_seed)?;
                all.chunks(*block_len).map(|c| c.to_vec()).collect()
            }
            _ => (0..blocks)
                .into_par_iter()
                .map(|b| self.dm.encode_block(&amp_bits[b * k..(b + 1) * k]))
                .collect::<Result<_>>()?,
        };
        let flat: Vec<u32> = amplitude_blocks.concat();
        let symbols_4d = self.pas.map(&flat, sign_bits)?;
        Ok(ShapingFrame {
            info_bits: info_bits.to_vec(),
            amplitude_blocks,
            sign_bits: sign_bits.to_vec(),
            symbols_4d,
            net_rate_bits_per_4d: self.rate_bits_per_4d(),
        })
    }

    /// Hard-decision recovery of the information bits of a noiseless frame.
    pub fn decode_frame(&self, symbols: &Symbols) -> Result<Vec<u8>> {
        self.blocks_for(symbols.len())?;
        let (amps, signs) = self.pas.demap_hard(symbols);
        let mut bits = amps
            .par_chunks(self.dm.block_len())
            .map(|b| self.dm.decode_block(b))
            .collect::<Result<Vec<_>>>()?
            .concat();
        bits.extend(signs);
        Ok(bits)
    }
}
