//! Thin wrappers over `rustfft` with a per-thread plan cache.
//!
//! All transforms are unnormalized in the forward direction; [`ifft`]
//! divides by the length so that `ifft(fft(x)) == x`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> = RefCell::new(HashMap::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|plans| {
        plans
            .borrow_mut()
            .entry((len, inverse))
            .or_insert_with(|| {
                PLANNER.with(|p| {
                    let mut p = p.borrow_mut();
                    if inverse {
                        p.plan_fft_inverse(len)
                    } else {
                        p.plan_fft_forward(len)
                    }
                })
            })
            .clone()
    })
}

/// In-place forward DFT.
pub fn fft_in_place(buf: &mut [Complex64]) {
    if buf.len() > 1 {
        plan(buf.len(), false).process(buf);
    }
}

/// In-place inverse DFT including the `1/N` factor.
pub fn ifft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    if n > 1 {
        plan(n, true).process(buf);
        let s = 1.0 / n as f64;
        buf.iter_mut().for_each(|v| *v *= s);
    }
}

/// In-place inverse DFT without the `1/N` factor.
pub fn ifft_unscaled_in_place(buf: &mut [Complex64]) {
    if buf.len() > 1 {
        plan(buf.len(), true).process(buf);
    }
}

pub fn fft(x: &[Complex64]) -> Vec<Complex64> {
    let mut v = x.to_vec();
    fft_in_place(&mut v);
    v
}

pub fn ifft(x: &[Complex64]) -> Vec<Complex64> {
    let mut v = x.to_vec();
    ifft_in_place(&mut v);
    v
}

/// Frequency of DFT bin `k` for a length-`n` transform at `sample_rate`,
/// mapped to the interval `[-fs/2, fs/2)`.
#[inline]
pub fn bin_frequency(k: usize, n: usize, sample_rate: f64) -> f64 {
    signed_bin(k, n) as f64 * sample_rate / n as f64
}

/// Signed index of bin `k`: `0, 1, .., ceil(n/2)-1, -floor(n/2), .., -1`.
#[inline]
pub fn signed_bin(k: usize, n: usize) -> i64 {
    if k < n.div_ceil(2) {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Bin index of a signed frequency index in a length-`n` transform.
#[inline]
pub fn bin_index(signed: i64, n: usize) -> usize {
    signed.rem_euclid(n as i64) as usize
}

/// All bin frequencies of a length-`n` transform.
pub fn frequencies(n: usize, sample_rate: f64) -> Vec<f64> {
    (0..n).map(|k| bin_frequency(k, n, sample_rate)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_parseval() {
        let x: Vec<Complex64> = (0..96)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let y = fft(&x);
        let e_t: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        let e_f: f64 = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64;
        assert!(((e_t - e_f) / e_t).abs() < 1e-12);
        let z = ifft(&y);
        for (a, b) in x.iter().zip(&z) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn signed_bins() {
        assert_eq!(signed_bin(0, 8), 0);
        assert_eq!(signed_bin(3, 8), 3);
        assert_eq!(signed_bin(4, 8), -4);
        assert_eq!(signed_bin(7, 8), -1);
        assert_eq!(signed_bin(4, 9), 4);
        assert_eq!(signed_bin(5, 9), -4);
        for n in [7usize, 8, 9] {
            for k in 0..n {
                assert_eq!(bin_index(signed_bin(k, n), n), k);
            }
        }
    }
}
