//! Split-step engine shared by the forward channel and the backpropagation
//! engines.
//!
//! Propagation runs in the loss-normalized frame: the field is divided by
//! the span's loss profile `exp(-a z / 2)`, which leaves a lossless
//! dispersive operator and a nonlinear kick weighted by the integral of the
//! power profile over each step. This is the same operator sequence as a
//! physical-frame step with the loss inside the linear filter and a
//! position-referenced effective length in the kick.

use std::collections::HashMap;

use crate::channel::LinkConfig;
use crate::fft;
use crate::signal::{Signal, C64};

/// Manakov factor applied to the Kerr coefficient.
pub const MANAKOV: f64 = 8.0 / 9.0;

/// One split-step segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    /// Segment length in m.
    pub length: f64,
    /// Position of the nonlinear kick within the segment, from its input.
    pub kick_at: f64,
    /// Integral of the normalized power profile over the segment, in m.
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Disperse(f64),
    Kick(f64),
}

/// Flatten steps into merged dispersion sections and kicks.
fn schedule(steps: &[Step], dir: Direction) -> Vec<Op> {
    let mut raw = Vec::with_capacity(3 * steps.len());
    match dir {
        Direction::Forward => {
            for s in steps {
                raw.push(Op::Disperse(s.kick_at * s.length));
                raw.push(Op::Kick(s.weight));
                raw.push(Op::Disperse((1.0 - s.kick_at) * s.length));
            }
        }
        Direction::Backward => {
            for s in steps.iter().rev() {
                raw.push(Op::Disperse(-((1.0 - s.kick_at) * s.length)));
                raw.push(Op::Kick(-s.weight));
                raw.push(Op::Disperse(-(s.kick_at * s.length)));
            }
        }
    }
    let mut ops: Vec<Op> = Vec::with_capacity(raw.len());
    for op in raw {
        match (ops.last_mut(), op) {
            (Some(Op::Disperse(acc)), Op::Disperse(l)) => *acc += l,
            _ => ops.push(op),
        }
    }
    ops.retain(|op| !matches!(op, Op::Disperse(l) if *l == 0.0));
    ops
}

/// Number of linear (FFT/IFFT pair) sections in a schedule.
pub fn linear_sections(steps: &[Step]) -> usize {
    schedule(steps, Direction::Forward)
        .iter()
        .filter(|op| matches!(op, Op::Disperse(_)))
        .count()
}

/// Dispersion filter `exp(j beta2/2 (2 pi f)^2 len)` over the absolute
/// frequencies of the signal's grid, premultiplied by `scale`.
pub fn dispersion_filter(n: usize, sample_rate: f64, center_offset: f64, beta2: f64, len: f64, scale: f64) -> Vec<C64> {
    (0..n)
        .map(|k| {
            let w = 2.0 * std::f64::consts::PI * (fft::bin_frequency(k, n, sample_rate) + center_offset);
            C64::from_polar(scale, 0.5 * beta2 * w * w * len)
        })
        .collect()
}

/// Reusable buffers and filter cache for one signal geometry.
pub struct Engine {
    beta2: f64,
    gamma: f64,
    filters: HashMap<(u64, usize, u64, u64), Vec<C64>>,
    power: Vec<f64>,
    phase: Vec<f64>,
}

impl Engine {
    pub fn new(link: &LinkConfig) -> Self {
        Engine {
            beta2: link.beta2(),
            gamma: link.gamma(),
            filters: HashMap::new(),
            power: Vec::new(),
            phase: Vec::new(),
        }
    }

    /// Apply the dispersion of `len` meters (negative inverts).
    pub fn disperse(&mut self, sig: &mut Signal, len: f64) {
        let n = sig.len();
        let (fs, off, beta2) = (sig.sample_rate, sig.center_offset, self.beta2);
        let h = self
            .filters
            .entry((len.to_bits(), n, fs.to_bits(), off.to_bits()))
            .or_insert_with(|| dispersion_filter(n, fs, off, beta2, len, 1.0 / n as f64));
        for buf in [&mut sig.x, &mut sig.y] {
            fft::fft_in_place(buf);
            buf.iter_mut().zip(h.iter()).for_each(|(v, f)| *v *= f);
            fft::ifft_unscaled_in_place(buf);
        }
    }

    /// Nonlinear phase rotation `exp(j gamma 8/9 weight (taps * P))`, with
    /// the symmetric power filter `taps = [c0, c1, ..]` applied cyclically
    /// to the joint power `P = |x|^2 + |y|^2`.
    pub fn kick(&mut self, sig: &mut Signal, weight: f64, taps: &[f64]) {
        let n = sig.len();
        let scale = self.gamma * MANAKOV * weight;
        if scale == 0.0 {
            return;
        }
        self.power.clear();
        self.power
            .extend(sig.x.iter().zip(&sig.y).map(|(a, b)| a.norm_sqr() + b.norm_sqr()));
        self.phase.clear();
        if taps.len() <= 1 {
            let c0 = taps.first().copied().unwrap_or(1.0) * scale;
            self.phase.extend(self.power.iter().map(|p| c0 * p));
        } else {
            self.phase.resize(n, 0.0);
            filter_symmetric(&self.power, taps, scale, &mut self.phase);
        }
        for ((x, y), ph) in sig.x.iter_mut().zip(sig.y.iter_mut()).zip(&self.phase) {
            let (s, c) = ph.sin_cos();
            let r = C64::new(c, s);
            *x *= r;
            *y *= r;
        }
    }

    /// Run a full step sequence in the given direction.
    pub fn run(&mut self, sig: &mut Signal, steps: &[Step], dir: Direction, taps: &[f64]) {
        for op in schedule(steps, dir) {
            match op {
                Op::Disperse(l) => self.disperse(sig, l),
                Op::Kick(w) => self.kick(sig, w, taps),
            }
        }
    }
}

/// `out[k] = scale * (c0 p[k] + sum_i c_i (p[k+i] + p[k-i]))`, cyclic.
pub fn filter_symmetric(p: &[f64], taps: &[f64], scale: f64, out: &mut [f64]) {
    let n = p.len();
    let nc = taps.len() - 1;
    // cyclically padded copy: ext[j + nc] = p[j]
    let ext: Vec<f64> = (0..n + 2 * nc)
        .map(|j| p[(j + n * (nc / n + 1) - nc) % n])
        .collect();
    for (k, o) in out.iter_mut().enumerate() {
        let c = k + nc;
        let mut acc = taps[0] * ext[c];
        for (i, t) in taps.iter().enumerate().skip(1) {
            acc += t * (ext[c + i] + ext[c - i]);
        }
        *o = scale * acc;
    }
}

/// Integral of the normalized power profile `exp(-a (z mod L_span))`
/// over `[z0, z1]` of the link.
pub fn power_integral(link: &LinkConfig, z0: f64, z1: f64) -> f64 {
    let a = link.alpha();
    let ls = link.span_m();
    if a == 0.0 {
        return z1 - z0;
    }
    let mut total = 0.0;
    let mut z = z0;
    while z < z1 - 1e-9 {
        let span = (z / ls + 1e-12).floor();
        let start = span * ls;
        let end = (start + ls).min(z1);
        let (u0, u1) = (z - start, end - start);
        total += ((-a * u0).exp() - (-a * u1).exp()) / a;
        z = end;
    }
    total
}

/// Step lengths within one span for `k` steps.
pub fn span_step_lengths(link: &LinkConfig, k: usize, logarithmic: bool) -> Vec<f64> {
    let ls = link.span_m();
    let a = link.alpha();
    if !logarithmic || a == 0.0 {
        return vec![ls / k as f64; k];
    }
    // equal power integral per step
    let delta = (1.0 - (-a * ls).exp()) / k as f64;
    let mut prev = 0.0;
    (1..=k)
        .map(|i| {
            let z = if i == k { ls } else { -(1.0 - i as f64 * delta).ln() / a };
            let h = z - prev;
            prev = z;
            h
        })
        .collect()
}

/// Steps over a single span (span-relative coordinates).
pub fn span_steps(link: &LinkConfig, k: usize, logarithmic: bool, kick_at: f64) -> Vec<Step> {
    let mut z = 0.0;
    span_step_lengths(link, k, logarithmic)
        .into_iter()
        .map(|h| {
            let w = power_integral(link, z, z + h);
            z += h;
            Step {
                length: h,
                kick_at,
                weight: w,
            }
        })
        .collect()
}

/// Steps over the whole link. Logarithmic grids repeat a per-span grid and
/// need `n_steps` to be a multiple of the span count; uniform grids split
/// the total length into equal segments regardless of span boundaries.
pub fn link_steps(link: &LinkConfig, n_steps: usize, logarithmic: bool, kick_at: f64) -> Vec<Step> {
    let spans = link.n_spans as usize;
    if logarithmic && n_steps % spans == 0 {
        let per_span = span_steps(link, n_steps / spans, true, kick_at);
        return (0..spans).flat_map(|_| per_span.iter().copied()).collect();
    }
    let total = link.total_m();
    let h = total / n_steps as f64;
    (0..n_steps)
        .map(|i| {
            let z0 = i as f64 * h;
            let z1 = if i + 1 == n_steps { total } else { z0 + h };
            Step {
                length: z1 - z0,
                kick_at,
                weight: power_integral(link, z0, z1),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_merges_linear_sections() {
        let s = Step { length: 2.0, kick_at: 0.5, weight: 1.0 };
        let ops = schedule(&[s, s, s], Direction::Forward);
        assert_eq!(ops.len(), 7);
        assert_eq!(ops[0], Op::Disperse(1.0));
        assert_eq!(ops[2], Op::Disperse(2.0));
        let s0 = Step { kick_at: 0.0, ..s };
        let ops = schedule(&[s0, s0], Direction::Backward);
        assert_eq!(ops, vec![Op::Disperse(-2.0), Op::Kick(-1.0), Op::Disperse(-2.0), Op::Kick(-1.0)]);
    }

    #[test]
    fn filter_matches_direct_sum() {
        let p: Vec<f64> = (0..11).map(|i| (i * i % 7) as f64).collect();
        let taps = [1.0, 0.5, 0.25];
        let mut out = vec![0.0; p.len()];
        filter_symmetric(&p, &taps, 2.0, &mut out);
        let n = p.len() as i64;
        for k in 0..p.len() as i64 {
            let at = |j: i64| p[j.rem_euclid(n) as usize];
            let d = 2.0 * (at(k) + 0.5 * (at(k + 1) + at(k - 1)) + 0.25 * (at(k + 2) + at(k - 2)));
            assert!((out[k as usize] - d).abs() < 1e-12);
        }
    }

    #[test]
    fn logarithmic_steps_have_equal_weights() {
        let link = LinkConfig::default();
        let steps = span_steps(&link, 8, true, 0.5);
        let total: f64 = steps.iter().map(|s| s.length).sum();
        assert!((total - link.span_m()).abs() < 1e-6);
        for s in &steps {
            assert!((s.weight - steps[0].weight).abs() < 1e-9 * steps[0].weight);
        }
        assert!(steps[0].length < steps[7].length);
    }

    #[test]
    fn power_integral_spans_boundaries() {
        let link = LinkConfig::default();
        let leff = power_integral(&link, 0.0, link.span_m());
        let a = link.alpha();
        assert!((leff - (1.0 - (-a * link.span_m()).exp()) / a).abs() < 1e-6);
        let two = power_integral(&link, 0.0, 2.0 * link.span_m());
        assert!((two - 2.0 * leff).abs() < 1e-6);
        let grid = link_steps(&link, 15, false, 0.5);
        let sum: f64 = grid.iter().map(|s| s.weight).sum();
        assert!((sum - link.n_spans as f64 * leff).abs() < 1e-4);
    }
}
