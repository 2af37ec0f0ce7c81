//! Experiment configuration, its validation and canonical hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{LinkConfig, StepPlan};
use crate::dbp::{DbpConfig, EngineKind};
use crate::error::{Error, Result};
use crate::rxdsp::CprConfig;
use crate::seqsel::{SelectionConfig, SelectionMetric};
use crate::shaping::{DmConfig, DmKind};
use crate::signal::{Oversampling, PulseConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modulation {
    U64qam,
    PasMb,
    PasEss,
    PasEssSelBs,
    PasEssSelIdeal,
}

impl Modulation {
    pub const ALL: [Modulation; 5] = [
        Modulation::U64qam,
        Modulation::PasMb,
        Modulation::PasEss,
        Modulation::PasEssSelBs,
        Modulation::PasEssSelIdeal,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Modulation::U64qam => "u64qam",
            Modulation::PasMb => "pas_mb",
            Modulation::PasEss => "pas_ess",
            Modulation::PasEssSelBs => "pas_ess_sel_bs",
            Modulation::PasEssSelIdeal => "pas_ess_sel_ideal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Modulation::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown modulation {s:?}")))
    }

    pub fn selects(&self) -> bool {
        matches!(self, Modulation::PasEssSelBs | Modulation::PasEssSelIdeal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WdmConfig {
    pub n_channels: u32,
    pub spacing_hz: f64,
}

impl Default for WdmConfig {
    fn default() -> Self {
        WdmConfig {
            n_channels: 1,
            spacing_hz: 50e9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CprKind {
    MeanPhase,
    Bps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CprSettings {
    pub kind: CprKind,
    #[serde(flatten)]
    pub params: CprConfig,
}

impl Default for CprSettings {
    fn default() -> Self {
        CprSettings {
            kind: CprKind::MeanPhase,
            params: CprConfig::default(),
        }
    }
}

fn default_rate() -> f64 {
    9.2
}

fn default_powers() -> Vec<f64> {
    (-4..=6).map(f64::from).collect()
}

fn default_symbols() -> usize {
    1 << 16
}

fn default_block() -> usize {
    256
}

/// One experiment: a transmitter, a link and a receiver, swept over power.
///
/// Omitted sections take defaults: 30 x 100 km of standard fiber, one
/// channel at 46.5 GBd, 2^16 symbols, CDC, mean phase removal. The shaper
/// defaults follow the modulation at `rate_bits_per_4d`; an ESSFM/CB-ESSFM
/// equalizer without `coeffs` is trained on each run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub modulation: Modulation,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default)]
    pub pulse: PulseConfig,
    /// Forward-propagation oversampling; chosen from the WDM band if absent.
    #[serde(default)]
    pub forward_sps: Option<Oversampling>,
    #[serde(default)]
    pub forward: StepPlan,
    #[serde(default)]
    pub wdm: WdmConfig,
    #[serde(default = "default_rate")]
    pub rate_bits_per_4d: f64,
    #[serde(default = "default_block")]
    pub block_len: usize,
    #[serde(default)]
    pub shaping: Option<DmConfig>,
    #[serde(default)]
    pub selection: Option<SelectionConfig>,
    #[serde(default)]
    pub dbp: DbpConfig,
    #[serde(default)]
    pub cpr: CprSettings,
    #[serde(default)]
    pub linewidth_hz: f64,
    #[serde(default = "default_powers")]
    pub power_sweep_dbm: Vec<f64>,
    #[serde(default = "default_symbols")]
    pub n_symbols: usize,
    #[serde(default)]
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn new(modulation: Modulation) -> Self {
        ExperimentConfig {
            modulation,
            link: LinkConfig::default(),
            pulse: PulseConfig::default(),
            forward_sps: None,
            forward: StepPlan::default(),
            wdm: WdmConfig::default(),
            rate_bits_per_4d: default_rate(),
            block_len: default_block(),
            shaping: None,
            selection: None,
            dbp: DbpConfig::default(),
            cpr: CprSettings::default(),
            linewidth_hz: 0.0,
            power_sweep_dbm: default_powers(),
            n_symbols: default_symbols(),
            master_seed: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        ExperimentConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Shaper configuration after defaults.
    pub fn shaping_config(&self) -> Option<DmConfig> {
        let k = DmConfig::k_bits_for_rate(self.block_len, self.rate_bits_per_4d);
        match self.modulation {
            Modulation::U64qam => None,
            Modulation::PasMb => Some(self.shaping.clone().unwrap_or_else(|| DmConfig::mb_iid(self.block_len, k))),
            _ => Some(self.shaping.clone().unwrap_or_else(|| DmConfig::ess(self.block_len, k))),
        }
    }

    /// Selection configuration after defaults; the metric follows the
    /// modulation.
    pub fn selection_config(&self) -> Option<SelectionConfig> {
        let metric = match self.modulation {
            Modulation::PasEssSelBs => SelectionMetric::NliCbessfm,
            Modulation::PasEssSelIdeal => SelectionMetric::NliIdeal,
            _ => return None,
        };
        let mut s = self.selection.clone().unwrap_or_default();
        if self.selection.is_none() {
            s.metric = metric;
        }
        Some(s)
    }

    /// Oversampling used for propagation: the smallest power of two
    /// leaving a 20% guard band around the WDM comb.
    pub fn forward_oversampling(&self) -> Oversampling {
        if let Some(s) = self.forward_sps {
            return s;
        }
        let band = (self.wdm.n_channels.max(1) - 1) as f64 * self.wdm.spacing_hz + self.pulse.occupied_bandwidth();
        let mut sps = 1u32;
        while (sps as f64) * self.pulse.symbol_rate < 1.2 * band {
            sps *= 2;
        }
        Oversampling::integer(sps)
    }

    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        self.forward.validate()?;
        self.pulse.with_sps(self.forward_oversampling()).validate()?;
        self.pulse.with_sps(self.dbp.samples_per_symbol).validate()?;
        self.dbp.validate()?;
        self.cpr.params.validate()?;
        if self.wdm.n_channels == 0 {
            return Err(Error::Config("wdm.n_channels must be at least 1".into()));
        }
        if self.wdm.n_channels > 1 && self.wdm.spacing_hz < self.pulse.occupied_bandwidth() {
            return Err(Error::Config("wdm.spacing_hz is narrower than the channel bandwidth".into()));
        }
        if !(self.linewidth_hz >= 0.0) {
            return Err(Error::Config("linewidth_hz must be non-negative".into()));
        }
        if self.n_symbols == 0 {
            return Err(Error::Config("n_symbols must be positive".into()));
        }
        if let Some(sh) = self.shaping_config() {
            sh.validate()?;
            let wanted = match self.modulation {
                Modulation::PasMb => &[DmKind::MbIid][..],
                Modulation::PasEss | Modulation::PasEssSelBs | Modulation::PasEssSelIdeal => &[DmKind::Ess][..],
                Modulation::U64qam => &[][..],
            };
            if !wanted.contains(&sh.kind) {
                return Err(Error::Config(format!(
                    "modulation {} needs a {:?} shaper, got {:?}",
                    self.modulation.name(),
                    wanted,
                    sh.kind
                )));
            }
            if (4 * self.n_symbols) % sh.block_len != 0 {
                return Err(Error::Config(format!(
                    "{} symbols do not fill whole {}-amplitude blocks",
                    self.n_symbols, sh.block_len
                )));
            }
        } else if self.shaping.is_some() {
            return Err(Error::Config("u64qam takes no shaping section".into()));
        }
        match (self.selection_config(), &self.selection) {
            (Some(sel), _) => {
                sel.validate()?;
                if self.n_symbols % sel.seq_len_4d != 0 {
                    return Err(Error::Config(format!(
                        "{} symbols are not a whole number of {}-symbol selection frames",
                        self.n_symbols, sel.seq_len_4d
                    )));
                }
                let blocks = 4 * sel.seq_len_4d;
                if let Some(sh) = self.shaping_config() {
                    if blocks % sh.block_len != 0 {
                        return Err(Error::Config("selection frames must hold whole shaping blocks".into()));
                    }
                }
            }
            (None, Some(_)) => {
                return Err(Error::Config(format!(
                    "selection needs a selecting PAS modulation, not {}",
                    self.modulation.name()
                )));
            }
            (None, None) => {}
        }
        if self.dbp.engine != EngineKind::Cdc && !self.dbp.coeffs.is_empty() {
            self.dbp.taps()?;
        }
        Ok(())
    }

    /// Byte-stable JSON with sorted keys.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&v).expect("json")
    }

    pub fn hash(&self) -> String {
        hex::encode(&Sha256::digest(self.canonical_json().as_bytes())[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml_takes_defaults() {
        let cfg = ExperimentConfig::from_toml("modulation = \"pas_ess\"\n").unwrap();
        assert_eq!(cfg.link, LinkConfig::default());
        assert_eq!(cfg.n_symbols, 1 << 16);
        assert_eq!(cfg.power_sweep_dbm.len(), 11);
        assert_eq!(cfg.shaping_config().unwrap().k_bits, 332);
        assert!(cfg.selection_config().is_none());
        assert_eq!(cfg.forward_oversampling(), Oversampling::integer(2));
    }

    #[test]
    fn roundtrip_and_hash() {
        let mut cfg = ExperimentConfig::new(Modulation::PasEssSelBs);
        cfg.dbp = DbpConfig::cb_essfm(30, 8);
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 16);
        let mut other = cfg.clone();
        other.master_seed = 1;
        assert_ne!(other.hash(), cfg.hash());
        assert!(cfg.canonical_json().find("\"block_len\"").unwrap() < cfg.canonical_json().find("\"modulation\"").unwrap());
    }

    #[test]
    fn forward_oversampling_follows_band() {
        let mut cfg = ExperimentConfig::new(Modulation::U64qam);
        for (n, sps) in [(1, 2), (3, 4), (5, 8)] {
            cfg.wdm.n_channels = n;
            assert_eq!(cfg.forward_oversampling(), Oversampling::integer(sps));
        }
    }

    #[test]
    fn inconsistent_configs_rejected() {
        let mut cfg = ExperimentConfig::new(Modulation::U64qam);
        cfg.selection = Some(SelectionConfig::default());
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::new(Modulation::PasEssSelBs);
        cfg.shaping = Some(DmConfig::mb_iid(256, 332));
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::new(Modulation::PasEss);
        cfg.n_symbols = 100;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::new(Modulation::U64qam);
        cfg.dbp.samples_per_symbol = Oversampling::new(1, 1);
        assert!(matches!(cfg.validate(), Err(Error::Aliasing(_))));
        assert!(ExperimentConfig::from_toml("modulation = \"qpsk\"").is_err());
    }
}
