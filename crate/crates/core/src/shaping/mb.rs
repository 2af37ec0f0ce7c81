//! Maxwell-Boltzmann amplitude distributions.

use rand::distr::{weighted::WeightedIndex, Distribution};

use super::AmplitudeAlphabet;
use crate::error::{Error, Result};
use crate::rng::{self, Role};
use crate::signal::entropy_bits;

/// `P(a) ~ exp(-nu a^2)`; `nu = inf` puts all mass on the smallest amplitude.
pub fn mb_pmf(alphabet: &AmplitudeAlphabet, nu: f64) -> Vec<f64> {
    let e = alphabet.energies();
    if nu == f64::INFINITY {
        let mut p = vec![0.0; e.len()];
        p[0] = 1.0;
        return p;
    }
    let w: Vec<f64> = e.iter().map(|&v| (-nu * (v - e[0]) as f64).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Bisection for the `nu` whose distribution has the target entropy.
pub fn mb_fit_nu(alphabet: &AmplitudeAlphabet, target_bits: f64) -> Result<f64> {
    let h_max = (alphabet.len() as f64).log2();
    if !(0.0..=h_max).contains(&target_bits) {
        return Err(Error::param("target_entropy", format!("outside [0, {h_max}]")));
    }
    if target_bits == h_max {
        return Ok(0.0);
    }
    if target_bits == 0.0 {
        return Ok(f64::INFINITY);
    }
    let h = |nu: f64| entropy_bits(&mb_pmf(alphabet, nu));
    let mut hi = 1e-3;
    while h(hi) > target_bits {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > target_bits {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// I.i.d. amplitudes from the MB distribution.
pub fn mb_sample(alphabet: &AmplitudeAlphabet, nu: f64, n: usize, rng_seed: u64) -> Result<Vec<u32>> {
    if nu.is_nan() || nu < 0.0 {
        return Err(Error::param("nu", "must be non-negative"));
    }
    let pmf = mb_pmf(alphabet, nu);
    let dist = WeightedIndex::new(&pmf).map_err(|e| Error::param("nu", e.to_string()))?;
    let mut r = rng::stream(rng_seed, Role::Amplitudes, 0);
    Ok((0..n).map(|_| alphabet.amplitudes[dist.sample(&mut r)]).collect())
}
