//! Probabilistic amplitude shaping onto dual-polarization square QAM.
//!
//! Amplitudes fill the four real dimensions of each 4D symbol round-robin
//! in the order x-I, x-Q, y-I, y-Q; a sign bit of 0 maps to a positive
//! coordinate.

use super::AmplitudeAlphabet;
use crate::error::{Error, Result};
use crate::signal::{Constellation, Symbols, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct Pas {
    pub alphabet: AmplitudeAlphabet,
    pub amplitude_pmf: Vec<f64>,
    /// Mean energy per 2D symbol of the unnormalized points.
    pub e_norm: f64,
}

impl Pas {
    pub fn new(alphabet: &AmplitudeAlphabet, amplitude_pmf: &[f64]) -> Result<Self> {
        alphabet.validate()?;
        if amplitude_pmf.len() != alphabet.len() {
            return Err(Error::LengthMismatch {
                what: "amplitude pmf",
                expected: alphabet.len(),
                got: amplitude_pmf.len(),
            });
        }
        let total: f64 = amplitude_pmf.iter().sum();
        if !(total > 0.0) || amplitude_pmf.iter().any(|p| *p < 0.0) {
            return Err(Error::param("amplitude_pmf", "must be a non-negative, non-zero distribution"));
        }
        let pmf: Vec<f64> = amplitude_pmf.iter().map(|p| p / total).collect();
        let e_axis: f64 = pmf.iter().zip(alphabet.energies()).map(|(p, e)| p * e as f64).sum();
        Ok(Pas {
            alphabet: alphabet.clone(),
            amplitude_pmf: pmf,
            e_norm: 2.0 * e_axis,
        })
    }

    /// Square QAM with the induced priors (uniform signs).
    pub fn constellation(&self) -> Result<Constellation> {
        if !self.alphabet.is_odd_ladder() {
            return Err(Error::param("alphabet", "square QAM needs amplitudes 1, 3, 5, ..."));
        }
        Constellation::square_qam(&self.amplitude_pmf)
    }

    pub fn map(&self, amplitudes: &[u32], sign_bits: &[u8]) -> Result<Symbols> {
        if amplitudes.len() % 4 != 0 {
            return Err(Error::param("amplitudes", "need four amplitudes per 4D symbol"));
        }
        if sign_bits.len() != amplitudes.len() {
            return Err(Error::LengthMismatch {
                what: "sign bits",
                expected: amplitudes.len(),
                got: sign_bits.len(),
            });
        }
        let s = 1.0 / self.e_norm.sqrt();
        let coord = |a: u32, b: u8| if b == 0 { a as f64 * s } else { -(a as f64) * s };
        let n = amplitudes.len() / 4;
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for (a, b) in amplitudes.chunks_exact(4).zip(sign_bits.chunks_exact(4)) {
            x.push(C64::new(coord(a[0], b[0]), coord(a[1], b[1])));
            y.push(C64::new(coord(a[2], b[2]), coord(a[3], b[3])));
        }
        Symbols::new(x, y)
    }

    /// Nearest amplitude and sign per real coordinate.
    pub fn demap_hard(&self, symbols: &Symbols) -> (Vec<u32>, Vec<u8>) {
        let s = self.e_norm.sqrt();
        let mut amps = Vec::with_capacity(4 * symbols.len());
        let mut signs = Vec::with_capacity(4 * symbols.len());
        for (x, y) in symbols.x.iter().zip(&symbols.y) {
            for v in [x.re, x.im, y.re, y.im] {
                let v = v * s;
                signs.push((v < 0.0) as u8);
                amps.push(self.alphabet.nearest(v.abs()));
            }
        }
        (amps, signs)
    }
}

pub fn pas_map(amplitudes: &[u32], sign_bits: &[u8], pas: &Pas) -> Result<Symbols> {
    pas.map(amplitudes, sign_bits)
}

pub fn pas_demap_hard(symbols: &Symbols, pas: &Pas) -> (Vec<u32>, Vec<u8>) {
    pas.demap_hard(symbols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shaping::mb::{mb_fit_nu, mb_pmf, mb_sample};
    use rand::{Rng, SeedableRng};

    #[test]
    fn innermost_point() {
        let al = AmplitudeAlphabet::default();
        let pas = Pas::new(&al, &[0.25; 4]).unwrap();
        assert_eq!(pas.e_norm, 42.0);
        let s = pas.map(&[1, 1, 1, 1], &[0, 0, 0, 0]).unwrap();
        let v = C64::new(1.0, 1.0) / 42f64.sqrt();
        assert_eq!((s.x[0], s.y[0]), (v, v));
        assert!(pas.map(&[1, 1, 1], &[0, 0, 0]).is_err());
        assert!(pas.map(&[1, 1, 1, 1], &[0, 0, 0]).is_err());
    }

    #[test]
    fn roundtrip() {
        let al = AmplitudeAlphabet::default();
        let pas = Pas::new(&al, &[0.4, 0.3, 0.2, 0.1]).unwrap();
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let n = 400_000;
        let amps: Vec<u32> = (0..n).map(|_| 2 * r.random_range(0..4u32) + 1).collect();
        let signs: Vec<u8> = (0..n).map(|_| r.random_range(0..2u8)).collect();
        let sym = pas.map(&amps, &signs).unwrap();
        assert_eq!(pas.demap_hard(&sym), (amps, signs));
    }

    #[test]
    fn mb_priors_match_product_distribution() {
        let al = AmplitudeAlphabet::default();
        let nu = mb_fit_nu(&al, 1.3).unwrap();
        let pmf = mb_pmf(&al, nu);
        let pas = Pas::new(&al, &pmf).unwrap();
        let c = pas.constellation().unwrap();
        let n = 1_000_000;
        let amps = mb_sample(&al, nu, 4 * n, 5).unwrap();
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let signs: Vec<u8> = (0..4 * n).map(|_| r.random_range(0..2u8)).collect();
        let sym = pas.map(&amps, &signs).unwrap();
        let mut hist = vec![0.0; c.len()];
        for v in sym.x.iter().chain(&sym.y) {
            let k = c.points.iter().position(|p| (p - v).norm() < 1e-9).unwrap();
            hist[k] += 1.0;
        }
        let tv: f64 = 0.5 * hist.iter().zip(&c.priors).map(|(h, p)| (h / (2 * n) as f64 - p).abs()).sum::<f64>();
        assert!(tv < 0.01, "{tv}");
        assert!((c.mean_energy() - 1.0).abs() < 1e-12);
    }
}
