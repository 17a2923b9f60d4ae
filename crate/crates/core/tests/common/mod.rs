//! Brute-force references shared by the integration tests. These are
//! written independently of the library's own verification module.

#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `y[n] = sum_m x[m]^2 h[n - m + c]^2`, `c = (W - 1) / 2`, zero outside.
pub fn ste_direct(x: &[f64], w: usize) -> Vec<f64> {
    let c = (w - 1) / 2;
    let h = |k: usize| 0.54 - 0.46 * (2.0 * PI * k as f64 / (w as f64 - 1.0)).cos();
    let mut y = vec![0.0; x.len()];
    for (n, out) in y.iter_mut().enumerate() {
        for (m, xm) in x.iter().enumerate() {
            let k = n as i64 - m as i64 + c as i64;
            if (0..w as i64).contains(&k) {
                let hk = h(k as usize);
                *out += xm * xm * hk * hk;
            }
        }
    }
    y
}

pub fn cost_naive(x: &[f64]) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - mean) * (v - mean)).sum()
}

/// Every admissible split `1 <= t <= n - 2`, smallest index on ties.
pub fn binseg_exhaustive(x: &[f64]) -> usize {
    let n = x.len();
    (1..=n - 2)
        .map(|t| (t, cost_naive(&x[..t]) + cost_naive(&x[t..])))
        .fold(
            (0, f64::INFINITY),
            |best, (t, c)| if c < best.1 { (t, c) } else { best },
        )
        .0
}

/// Baseline and run counter before each tested sample, from a full
/// recompute.
#[derive(Debug, Clone, Copy)]
pub struct ReplayState {
    pub mean: f64,
    pub std: f64,
    pub run: usize,
}

pub fn detector_replay(
    s: &[f64],
    t0: usize,
    l: usize,
    k: f64,
    floor: f64,
    reset: bool,
) -> (Option<usize>, Vec<ReplayState>) {
    let moments = |xs: &[f64]| {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let mut trace = Vec::new();
    let (mut mean, mut std) = moments(&s[..t0]);
    let mut run = 0;
    for t in t0..s.len() {
        trace.push(ReplayState { mean, std, run });
        if (s[t] - mean).abs() >= k * std.max(floor) {
            run += 1;
        } else {
            (mean, std) = moments(&s[..=t]);
            if reset {
                run = 0;
            }
        }
        if run > l {
            return (Some(t - run), trace);
        }
    }
    (None, trace)
}

/// Positive envelope: log-normal floor plus up to three rectangular bursts.
pub fn envelope(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let jitter = Normal::new(0.0, rng.random_range(0.05..0.4)).unwrap();
    let level = 10f64.powf(rng.random_range(-4.0..1.0));
    let mut s: Vec<f64> = (0..n).map(|_| level * f64::exp(jitter.sample(rng))).collect();
    for _ in 0..rng.random_range(0..=3) {
        let at = rng.random_range(0..n);
        let len = rng.random_range(1..=(n - at).min(400));
        let height = level * 10f64.powf(rng.random_range(-0.3..2.0));
        for v in &mut s[at..at + len] {
            *v += height;
        }
    }
    s
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    let d = Normal::new(0.0, std).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}
