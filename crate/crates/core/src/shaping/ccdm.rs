//! Constant-composition distribution matching by exact multiset ranking.

use num_bigint::BigUint;
use num_traits::{One, Zero};

use super::{bits_to_index, index_to_bits, AmplitudeAlphabet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Ccdm {
    pub alphabet: AmplitudeAlphabet,
    /// Count of each alphabet amplitude in every block.
    pub composition: Vec<usize>,
    total: BigUint,
}

/// Multinomial coefficient `(sum c)! / prod c!`.
pub fn multinomial(counts: &[usize]) -> BigUint {
    let mut acc = BigUint::one();
    let mut n = 0usize;
    for &c in counts {
        for i in 1..=c {
            n += 1;
            acc *= n;
            acc /= i;
        }
    }
    acc
}

impl Ccdm {
    pub fn new(alphabet: &AmplitudeAlphabet, composition: Vec<usize>) -> Result<Self> {
        alphabet.validate()?;
        if composition.len() != alphabet.len() {
            return Err(Error::LengthMismatch {
                what: "composition",
                expected: alphabet.len(),
                got: composition.len(),
            });
        }
        if composition.iter().sum::<usize>() == 0 {
            return Err(Error::param("composition", "empty block"));
        }
        let total = multinomial(&composition);
        Ok(Ccdm {
            alphabet: alphabet.clone(),
            composition,
            total,
        })
    }

    pub fn block_len(&self) -> usize {
        self.composition.iter().sum()
    }

    pub fn total(&self) -> &BigUint {
        &self.total
    }

    pub fn max_bits(&self) -> u64 {
        self.total.bits() - 1
    }

    pub fn unrank(&self, index: &BigUint) -> Result<Vec<u32>> {
        if index >= &self.total {
            return Err(Error::IndexOutOfRange(format!("{index} is not below {}", self.total)));
        }
        let mut counts = self.composition.clone();
        let mut remaining = self.block_len();
        let mut m = self.total.clone();
        let mut idx = index.clone();
        let mut out = Vec::with_capacity(remaining);
        while remaining > 0 {
            for (i, c) in counts.iter_mut().enumerate() {
                if *c == 0 {
                    continue;
                }
                let sub = &m * *c / remaining;
                if idx < sub {
                    out.push(self.alphabet.amplitudes[i]);
                    *c -= 1;
                    m = sub;
                    break;
                }
                idx -= &sub;
            }
            remaining -= 1;
        }
        Ok(out)
    }

    pub fn rank(&self, block: &[u32]) -> Result<BigUint> {
        let mut seen = vec![0usize; self.alphabet.len()];
        let mut positions = Vec::with_capacity(block.len());
        for a in block {
            let i = self.alphabet.position(*a)?;
            seen[i] += 1;
            positions.push(i);
        }
        if seen != self.composition {
            return Err(Error::param("block", "does not have the target composition"));
        }
        let mut counts = self.composition.clone();
        let mut remaining = block.len();
        let mut m = self.total.clone();
        let mut idx = BigUint::zero();
        for &p in &positions {
            for i in 0..p {
                if counts[i] > 0 {
                    idx += &m * counts[i] / remaining;
                }
            }
            m = &m * counts[p] / remaining;
            counts[p] -= 1;
            remaining -= 1;
        }
        Ok(idx)
    }

    pub fn encode(&self, bits: &[u8], k_bits: usize) -> Result<Vec<u32>> {
        if bits.len() != k_bits {
            return Err(Error::LengthMismatch {
                what: "ccdm input bits",
                expected: k_bits,
                got: bits.len(),
            });
        }
        if k_bits as u64 > self.max_bits() {
            return Err(Error::InfeasibleRate(format!(
                "{k_bits} bits exceed the {} available for this composition",
                self.max_bits()
            )));
        }
        self.unrank(&bits_to_index(bits)?)
    }

    pub fn decode(&self, block: &[u32], k_bits: usize) -> Result<Vec<u8>> {
        let idx = self.rank(block)?;
        if idx.bits() > k_bits as u64 {
            return Err(Error::IndexOutOfRange(format!("block index needs more than {k_bits} bits")));
        }
        Ok(index_to_bits(&idx, k_bits))
    }

    pub fn amplitude_pmf(&self) -> Vec<f64> {
        let n = self.block_len() as f64;
        self.composition.iter().map(|&c| c as f64 / n).collect()
    }
}

/// Composition of length `n` closest to `pmf`: floor of `n p` plus the
/// largest remainders.
pub fn composition_for(pmf: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = pmf.iter().sum();
    let want: Vec<f64> = pmf.iter().map(|p| p / total * n as f64).collect();
    let mut counts: Vec<usize> = want.iter().map(|w| w.floor() as usize).collect();
    let mut order: Vec<usize> = (0..pmf.len()).collect();
    order.sort_by(|&a, &b| (want[b] - want[b].floor()).total_cmp(&(want[a] - want[a].floor())).then(a.cmp(&b)));
    let short = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_symbol_example() {
        let al = AmplitudeAlphabet::new(vec![1, 3]).unwrap();
        let c = Ccdm::new(&al, vec![1, 1]).unwrap();
        assert_eq!(c.max_bits(), 1);
        assert_eq!(c.encode(&[0], 1).unwrap(), vec![1, 3]);
        assert_eq!(c.encode(&[1], 1).unwrap(), vec![3, 1]);
        let single = Ccdm::new(&AmplitudeAlphabet::new(vec![1]).unwrap(), vec![4]).unwrap();
        assert_eq!(single.max_bits(), 0);
        assert_eq!(single.encode(&[], 0).unwrap(), vec![1; 4]);
    }

    #[test]
    fn ranks_are_lexicographic_and_exhaustive() {
        let al = AmplitudeAlphabet::default();
        let c = Ccdm::new(&al, vec![3, 2, 1, 1]).unwrap();
        assert_eq!(c.total(), &BigUint::from(420u32));
        let mut prev: Option<Vec<u32>> = None;
        for i in 0..420u32 {
            let s = c.unrank(&BigUint::from(i)).unwrap();
            assert_eq!(c.rank(&s).unwrap(), BigUint::from(i));
            if let Some(p) = prev {
                assert!(p < s);
            }
            prev = Some(s);
        }
    }

    #[test]
    fn rejects_wrong_composition_and_rate() {
        let al = AmplitudeAlphabet::default();
        let c = Ccdm::new(&al, vec![2, 1, 1, 0]).unwrap();
        assert!(c.rank(&[1, 1, 1, 3]).is_err());
        assert!(c.encode(&[0; 4], 4).is_err());
        assert!(Ccdm::new(&al, vec![1, 2]).is_err());
    }

    #[test]
    fn composition_rounding() {
        let c = composition_for(&[0.4, 0.3, 0.2, 0.1], 256);
        assert_eq!(c.iter().sum::<usize>(), 256);
        assert_eq!(c, vec![102, 77, 51, 26]);
    }
}
