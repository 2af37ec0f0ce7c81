//! Enumerative sphere shaping over an energy-bounded trellis.
//!
//! Sequence energies from an odd-integer alphabet live on a lattice: every
//! squared amplitude is `base + t g` for the smallest energy `base` and the
//! gcd `g` of the energy differences, so a length-`m` sequence has energy
//! `m base + j g`. Trellis rows are indexed by `j`.

use std::path::Path;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{bits_to_index, index_to_bits, AmplitudeAlphabet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Lattice {
    base: u64,
    step: u64,
    offsets: [u64; 16],
    size: usize,
}

impl Lattice {
    fn new(alphabet: &AmplitudeAlphabet) -> Self {
        let e = alphabet.energies();
        let base = e[0];
        let step = e.iter().fold(0, |g, v| gcd(g, v - base)).max(1);
        let mut offsets = [0; 16];
        for (o, v) in offsets.iter_mut().zip(&e) {
            *o = (v - base) / step;
        }
        Lattice { base, step, offsets, size: e.len() }
    }

    fn offsets(&self) -> &[u64] {
        &self.offsets[..self.size]
    }

    /// Lattice index of the largest admissible energy `<= r` for length `m`.
    fn index(&self, m: usize, r: i64) -> Option<usize> {
        let lo = (m as u64 * self.base) as i64;
        if r < lo {
            None
        } else {
            Some(((r - lo) as u64 / self.step) as usize)
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Counts `T(m, E)` of length-`m` sequences with energy at most `E`, for
/// every suffix length up to `block_len` and every budget up to `e_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct EssTrellis {
    pub alphabet: AmplitudeAlphabet,
    pub block_len: usize,
    pub e_max: u64,
    lattice: Lattice,
    rows: Vec<Vec<BigUint>>,
}

impl EssTrellis {
    pub fn new(alphabet: &AmplitudeAlphabet, block_len: usize, e_max: u64) -> Result<Self> {
        alphabet.validate()?;
        if block_len == 0 {
            return Err(Error::param("block_len", "must be positive"));
        }
        let lattice = Lattice::new(alphabet);
        let lo = block_len as u64 * lattice.base;
        if e_max < lo {
            return Err(Error::InfeasibleRate(format!(
                "e_max {e_max} is below the minimum block energy {lo}"
            )));
        }
        let width = ((e_max - lo) / lattice.step) as usize + 1;
        let rows = build_rows(&lattice, block_len, width);
        Ok(EssTrellis {
            alphabet: alphabet.clone(),
            block_len,
            e_max,
            lattice,
            rows,
        })
    }

    /// Load the trellis from `dir` if a valid copy is cached there, else
    /// build it and store it. Corrupt or mismatched files are rebuilt.
    pub fn cached(dir: &Path, alphabet: &AmplitudeAlphabet, block_len: usize, e_max: u64) -> Result<Self> {
        let key = CacheKey {
            alphabet: alphabet.amplitudes.clone(),
            block_len,
            e_max,
        };
        let name = format!("ess-{}.json", &hex::encode(Sha256::digest(serde_json::to_vec(&key).expect("key"))));
        let path = dir.join(name);
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(file) = serde_json::from_str::<CacheFile>(&text) {
                if file.key == key && file.digest == rows_digest(&file.rows) {
                    let lattice = Lattice::new(alphabet);
                    let rows = file
                        .rows
                        .iter()
                        .map(|r| r.iter().map(|s| BigUint::parse_bytes(s.as_bytes(), 16)).collect::<Option<Vec<_>>>())
                        .collect::<Option<Vec<_>>>();
                    if let Some(rows) = rows {
                        return Ok(EssTrellis {
                            alphabet: alphabet.clone(),
                            block_len,
                            e_max,
                            lattice,
                            rows,
                        });
                    }
                }
            }
            log::warn!("discarding invalid trellis cache {}", path.display());
        }
        let t = EssTrellis::new(alphabet, block_len, e_max)?;
        let rows: Vec<Vec<String>> = t.rows.iter().map(|r| r.iter().map(|v| v.to_str_radix(16)).collect()).collect();
        let file = CacheFile {
            digest: rows_digest(&rows),
            key,
            rows,
        };
        std::fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        serde_json::to_writer(&mut tmp, &file).map_err(|e| Error::Io(e.to_string()))?;
        tmp.persist(&path).map_err(|e| Error::Io(e.to_string()))?;
        Ok(t)
    }

    /// Number of length-`m` sequences with energy at most `r`.
    pub fn count(&self, m: usize, r: i64) -> BigUint {
        self.count_ref(m, r).cloned().unwrap_or_default()
    }

    fn count_ref(&self, m: usize, r: i64) -> Option<&BigUint> {
        let row = &self.rows[m];
        self.lattice.index(m, r).map(|j| &row[j.min(row.len() - 1)])
    }

    /// Number of admissible blocks.
    pub fn total(&self) -> BigUint {
        self.count(self.block_len, self.e_max as i64)
    }

    /// Largest `k` with `2^k` admissible blocks.
    pub fn max_bits(&self) -> u64 {
        self.total().bits() - 1
    }

    /// Lexicographic unranking: the `index`-th admissible block.
    pub fn unrank(&self, index: &BigUint) -> Result<Vec<u32>> {
        if index >= &self.total() {
            return Err(Error::IndexOutOfRange(format!("{index} is not below {}", self.total())));
        }
        let mut idx = index.clone();
        let mut r = self.e_max as i64;
        let mut out = Vec::with_capacity(self.block_len);
        for pos in 0..self.block_len {
            let m = self.block_len - pos - 1;
            for (&a, &e) in self.alphabet.amplitudes.iter().zip(&self.alphabet.energies()) {
                let Some(c) = self.count_ref(m, r - e as i64) else {
                    continue;
                };
                if &idx < c {
                    out.push(a);
                    r -= e as i64;
                    break;
                }
                idx -= c;
            }
        }
        let energy: u64 = self.alphabet.energy_of(&out)?;
        assert!(out.len() == self.block_len && energy <= self.e_max, "sphere bound violated");
        Ok(out)
    }

    /// Lexicographic rank of an admissible block.
    pub fn rank(&self, block: &[u32]) -> Result<BigUint> {
        if block.len() != self.block_len {
            return Err(Error::LengthMismatch {
                what: "amplitude block",
                expected: self.block_len,
                got: block.len(),
            });
        }
        if self.alphabet.energy_of(block)? > self.e_max {
            return Err(Error::IndexOutOfRange("block energy exceeds e_max".into()));
        }
        let energies = self.alphabet.energies();
        let mut idx = BigUint::zero();
        let mut r = self.e_max as i64;
        for (pos, &a) in block.iter().enumerate() {
            let m = self.block_len - pos - 1;
            for (&b, &e) in self.alphabet.amplitudes.iter().zip(&energies) {
                if b == a {
                    r -= e as i64;
                    break;
                }
                if let Some(c) = self.count_ref(m, r - e as i64) {
                    idx += c;
                }
            }
        }
        Ok(idx)
    }

    pub fn encode(&self, bits: &[u8], k_bits: usize) -> Result<Vec<u32>> {
        if bits.len() != k_bits {
            return Err(Error::LengthMismatch {
                what: "ess input bits",
                expected: k_bits,
                got: bits.len(),
            });
        }
        self.unrank(&bits_to_index(bits)?)
    }

    pub fn decode(&self, block: &[u32], k_bits: usize) -> Result<Vec<u8>> {
        let idx = self.rank(block)?;
        if idx.bits() > k_bits as u64 {
            return Err(Error::IndexOutOfRange(format!("block index {idx} needs more than {k_bits} bits")));
        }
        Ok(index_to_bits(&idx, k_bits))
    }

    /// Exact amplitude distribution, averaged over positions, of the blocks
    /// with index below `2^k_bits` drawn uniformly.
    pub fn amplitude_pmf(&self, k_bits: usize) -> Result<Vec<f64>> {
        let limit = BigUint::one() << k_bits;
        let total = self.total();
        if limit > total {
            return Err(Error::InfeasibleRate(format!("2^{k_bits} exceeds {total} admissible blocks")));
        }
        let occ = Occupancy::new(self);
        let na = self.alphabet.len();
        let mut hist = vec![0.0; na];
        if limit == total {
            hist.copy_from_slice(occ.occ(self.block_len, self.e_max as i64));
        } else {
            // indices below `limit` split by the first position where they
            // leave the path of block `limit`
            let path = self.unrank(&limit)?;
            let energies = self.alphabet.energies();
            let mut prefix = vec![0.0; na];
            let mut r = self.e_max as i64;
            for (pos, &u) in path.iter().enumerate() {
                let m = self.block_len - pos - 1;
                for (i, (&b, &e)) in self.alphabet.amplitudes.iter().zip(&energies).enumerate() {
                    if b == u {
                        prefix[i] += 1.0;
                        r -= e as i64;
                        break;
                    }
                    let n = occ.count(m, r - e as i64);
                    if n == 0.0 {
                        continue;
                    }
                    for (h, p) in hist.iter_mut().zip(&prefix) {
                        *h += p * n;
                    }
                    hist[i] += n;
                    for (h, o) in hist.iter_mut().zip(occ.occ(m, r - e as i64)) {
                        *h += o;
                    }
                }
            }
        }
        let sum: f64 = hist.iter().sum();
        Ok(hist.into_iter().map(|h| h / sum).collect())
    }

    /// Mean energy per amplitude of the blocks with index below `2^k_bits`.
    pub fn mean_energy(&self, k_bits: usize) -> Result<f64> {
        let pmf = self.amplitude_pmf(k_bits)?;
        Ok(pmf.iter().zip(self.alphabet.energies()).map(|(p, e)| p * e as f64).sum())
    }
}

fn build_rows(lattice: &Lattice, block_len: usize, width: usize) -> Vec<Vec<BigUint>> {
    let mut rows = Vec::with_capacity(block_len + 1);
    rows.push(vec![BigUint::one(); width]);
    for m in 1..=block_len {
        let prev: &Vec<BigUint> = &rows[m - 1];
        let row = (0..width)
            .map(|j| {
                let mut acc = BigUint::zero();
                for &t in lattice.offsets() {
                    if let Some(k) = (j as u64).checked_sub(t) {
                        acc += &prev[k as usize];
                    }
                }
                acc
            })
            .collect();
        rows.push(row);
    }
    rows
}

/// Floating-point counts and per-amplitude occurrence totals over all
/// suffixes; exact enough for distributions since counts stay below 2^1000.
struct Occupancy<'a> {
    trellis: &'a EssTrellis,
    counts: Vec<Vec<f64>>,
    occ: Vec<Vec<Vec<f64>>>,
}

impl<'a> Occupancy<'a> {
    fn new(trellis: &'a EssTrellis) -> Self {
        let na = trellis.alphabet.len();
        let counts: Vec<Vec<f64>> = trellis
            .rows
            .iter()
            .map(|r| r.iter().map(|v| v.to_f64().unwrap_or(f64::INFINITY)).collect())
            .collect();
        let width = counts[0].len();
        let offsets = trellis.lattice.offsets();
        let mut occ = vec![vec![vec![0.0; na]; width]];
        for m in 1..=trellis.block_len {
            let row = (0..width)
                .map(|j| {
                    let mut o = vec![0.0; na];
                    for (i, &t) in offsets.iter().enumerate() {
                        if let Some(k) = (j as u64).checked_sub(t) {
                            let k = k as usize;
                            o[i] += counts[m - 1][k];
                            for (a, b) in o.iter_mut().zip(&occ[m - 1][k]) {
                                *a += b;
                            }
                        }
                    }
                    o
                })
                .collect();
            occ.push(row);
        }
        Occupancy { trellis, counts, occ }
    }

    fn slot(&self, m: usize, r: i64) -> Option<usize> {
        self.trellis
            .lattice
            .index(m, r)
            .map(|j| j.min(self.counts[m].len() - 1))
    }

    fn count(&self, m: usize, r: i64) -> f64 {
        self.slot(m, r).map_or(0.0, |j| self.counts[m][j])
    }

    fn occ(&self, m: usize, r: i64) -> &[f64] {
        match self.slot(m, r) {
            Some(j) => &self.occ[m][j],
            None => &self.occ[0][0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheKey {
    alphabet: Vec<u32>,
    block_len: usize,
    e_max: u64,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    key: CacheKey,
    digest: String,
    rows: Vec<Vec<String>>,
}

fn rows_digest(rows: &[Vec<String>]) -> String {
    let mut h = Sha256::new();
    for r in rows {
        for v in r {
            h.update(v.as_bytes());
            h.update(b",");
        }
        h.update(b";");
    }
    hex::encode(h.finalize())
}

/// Smallest energy bound admitting at least `2^k_bits` blocks.
pub fn ess_min_emax(alphabet: &AmplitudeAlphabet, block_len: usize, k_bits: usize) -> Result<u64> {
    alphabet.validate()?;
    let cap = block_len as f64 * (alphabet.len() as f64).log2();
    if k_bits as f64 > cap + 1e-12 {
        return Err(Error::InfeasibleRate(format!(
            "{k_bits} bits exceed {cap} bits for block length {block_len}"
        )));
    }
    let lattice = Lattice::new(alphabet);
    let top = *alphabet.energies().last().expect("alphabet");
    let width = ((block_len as u64 * (top - lattice.base)) / lattice.step) as usize + 1;
    let target = BigUint::one() << k_bits;
    let mut row = vec![BigUint::one(); width];
    for _ in 0..block_len {
        row = (0..width)
            .map(|j| {
                let mut acc = BigUint::zero();
                for &t in lattice.offsets() {
                    if let Some(k) = (j as u64).checked_sub(t) {
                        acc += &row[k as usize];
                    }
                }
                acc
            })
            .collect();
    }
    let j = row
        .iter()
        .position(|c| c >= &target)
        .ok_or_else(|| Error::InfeasibleRate(format!("no energy bound reaches {k_bits} bits")))?;
    Ok(block_len as u64 * lattice.base + j as u64 * lattice.step)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(alphabet: &AmplitudeAlphabet, n: usize, e_max: u64) -> Vec<Vec<u32>> {
        let a = &alphabet.amplitudes;
        let mut out = vec![vec![]];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|p: Vec<u32>| {
                    a.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        out.retain(|s| s.iter().map(|v| (v * v) as u64).sum::<u64>() <= e_max);
        out
    }

    #[test]
    fn two_amplitude_example() {
        let al = AmplitudeAlphabet::new(vec![1, 3]).unwrap();
        let t = EssTrellis::new(&al, 2, 10).unwrap();
        assert_eq!(t.total(), BigUint::from(3u32));
        assert_eq!(t.max_bits(), 1);
        assert_eq!(t.encode(&[0], 1).unwrap(), vec![1, 1]);
        assert_eq!(t.encode(&[1], 1).unwrap(), vec![1, 3]);
        assert!(t.unrank(&BigUint::from(3u32)).is_err());
    }

    #[test]
    fn matches_enumeration_in_order() {
        let al = AmplitudeAlphabet::default();
        for (n, e_max) in [(3, 59), (4, 60), (5, 123), (6, 90)] {
            let list = brute(&al, n, e_max);
            let t = EssTrellis::new(&al, n, e_max).unwrap();
            assert_eq!(t.total(), BigUint::from(list.len()));
            for (i, s) in list.iter().enumerate() {
                assert_eq!(&t.unrank(&BigUint::from(i)).unwrap(), s);
                assert_eq!(t.rank(s).unwrap(), BigUint::from(i));
            }
        }
    }

    #[test]
    fn min_emax_examples() {
        let al = AmplitudeAlphabet::default();
        assert_eq!(ess_min_emax(&al, 2, 2).unwrap(), 18);
        assert_eq!(ess_min_emax(&al, 2, 0).unwrap(), 2);
        assert!(ess_min_emax(&al, 2, 5).is_err());
        let mut last = 0;
        for k in 0..=16 {
            let e = ess_min_emax(&al, 8, k).unwrap();
            assert!(e >= last);
            last = e;
        }
        assert_eq!(ess_min_emax(&al, 8, 16).unwrap(), 8 * 49);
    }

    #[test]
    fn unconstrained_sphere_is_full_cube() {
        let al = AmplitudeAlphabet::default();
        let t = EssTrellis::new(&al, 16, 16 * 49).unwrap();
        assert_eq!(t.max_bits(), 32);
        assert_eq!(t.total(), BigUint::one() << 32);
    }

    #[test]
    fn pmf_matches_enumeration() {
        let al = AmplitudeAlphabet::default();
        let (n, k) = (6, 9);
        let e_max = ess_min_emax(&al, n, k).unwrap();
        let t = EssTrellis::new(&al, n, e_max).unwrap();
        let list = brute(&al, n, e_max);
        let mut hist = [0.0; 4];
        for s in &list[..1 << k] {
            for v in s {
                hist[(*v as usize - 1) / 2] += 1.0;
            }
        }
        let pmf = t.amplitude_pmf(k).unwrap();
        for (p, h) in pmf.iter().zip(hist) {
            assert!((p - h / (n << k) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn headline_block_fits() {
        let al = AmplitudeAlphabet::default();
        let e_max = ess_min_emax(&al, 256, 332).unwrap();
        let t = EssTrellis::new(&al, 256, e_max).unwrap();
        assert!(t.max_bits() >= 332);
        let pmf = t.amplitude_pmf(332).unwrap();
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(pmf[0] > pmf[1] && pmf[1] > pmf[2] && pmf[2] > pmf[3]);
        let bits: Vec<u8> = (0..332).map(|i| ((i * 7 + 3) % 5 == 0) as u8).collect();
        let block = t.encode(&bits, 332).unwrap();
        assert_eq!(t.decode(&block, 332).unwrap(), bits);
    }

    #[test]
    fn cache_roundtrip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let al = AmplitudeAlphabet::default();
        let a = EssTrellis::cached(dir.path(), &al, 12, 200).unwrap();
        let b = EssTrellis::cached(dir.path(), &al, 12, 200).unwrap();
        assert_eq!(a, b);
        let file = std::fs::read_dir(dir.path()).unwrap().next().unwrap().unwrap().path();
        std::fs::write(&file, "{}").unwrap();
        assert_eq!(EssTrellis::cached(dir.path(), &al, 12, 200).unwrap(), a);
    }
}
