//! Butterworth band-pass design (bilinear transform, second-order sections)
//! and zero-phase application.
//!
//! Design steps:
//!
//! 1. analog low-pass prototype of order `order / 2`, poles on the unit circle
//! 2. low-pass to band-pass transform around `w0 = sqrt(w_lo * w_hi)` with
//!    bandwidth `w_hi - w_lo`, using prewarped edges `2 fs tan(pi f / fs)`
//! 3. bilinear transform `z = (2 fs + s) / (2 fs - s)`
//! 4. one conjugate pole pair per section; sections nearest `z = 1` get a
//!    double zero there, those nearest `z = -1` a double zero at Nyquist
//! 5. each section is scaled to unit magnitude at the digital centre frequency
//!
//! Zero-phase application pads both ends with an odd (point-reflected)
//! extension of `3 * order` samples (clamped to `len - 1`), starts every
//! pass from the steady state for the mean of its leading tenth, and
//! averages the forward-backward and backward-forward results. The
//! average makes the output exactly time-reversal symmetric.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{Error, Result};

/// Band-pass parameters. Cutoffs are checked against the waveform's Nyquist
/// frequency when the filter is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandPassSpec {
    pub low_cutoff_hz: f64,
    pub high_cutoff_hz: f64,
    /// Total band-pass order (number of poles); must be even.
    pub order: usize,
    pub zero_phase: bool,
}

impl Default for BandPassSpec {
    /// 0.5 Hz to 14 kHz, the accelerometer's rated band.
    fn default() -> Self {
        Self {
            low_cutoff_hz: 0.5,
            high_cutoff_hz: 14_000.0,
            order: 4,
            zero_phase: true,
        }
    }
}

impl BandPassSpec {
    /// Checks that do not depend on the sampling rate.
    pub fn validate_design(&self) -> Result<()> {
        if !(self.low_cutoff_hz.is_finite() && self.high_cutoff_hz.is_finite()) {
            return Err(Error::config("band-pass cutoffs must be finite"));
        }
        if !(0.0 < self.low_cutoff_hz && self.low_cutoff_hz < self.high_cutoff_hz) {
            return Err(Error::config(format!(
                "band-pass cutoffs must satisfy 0 < low ({}) < high ({})",
                self.low_cutoff_hz, self.high_cutoff_hz
            )));
        }
        if self.order == 0 || !self.order.is_multiple_of(2) {
            return Err(Error::config(format!(
                "band-pass order must be even and positive, got {}",
                self.order
            )));
        }
        Ok(())
    }

    pub fn validate(&self, sampling_rate_hz: f64) -> Result<()> {
        self.validate_design()?;
        let nyquist = sampling_rate_hz / 2.0;
        if self.high_cutoff_hz >= nyquist {
            return Err(Error::config(format!(
                "band-pass high cutoff ({}) must lie below nyquist ({nyquist})",
                self.high_cutoff_hz
            )));
        }
        Ok(())
    }
}

/// Second-order section `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`,
/// run in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    pub fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        let num = self.b[0] + self.b[1] * z_inv + self.b[2] * z2;
        let den = 1.0 + self.a[0] * z_inv + self.a[1] * z2;
        num / den
    }

    fn dc_gain(&self) -> f64 {
        let den = 1.0 + self.a[0] + self.a[1];
        if den == 0.0 {
            0.0
        } else {
            (self.b[0] + self.b[1] + self.b[2]) / den
        }
    }

    /// State that keeps the output constant for a constant input `u`.
    fn steady_state(&self, u: f64) -> [f64; 2] {
        let y = self.dc_gain() * u;
        let s1 = self.b[2] * u - self.a[1] * y;
        let s0 = self.b[1] * u - self.a[0] * y + s1;
        [s0, s1]
    }

    fn run(&self, data: &mut [f64], mut state: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for v in data.iter_mut() {
            let x = *v;
            let y = b0 * x + state[0];
            state[0] = b1 * x - a1 * y + state[1];
            state[1] = b2 * x - a2 * y;
            *v = y;
        }
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    sections: Vec<Biquad>,
    order: usize,
}

impl SosFilter {
    /// Digital Butterworth band-pass of total order `order` (even).
    pub fn butterworth_band_pass(low_hz: f64, high_hz: f64, order: usize, sampling_rate_hz: f64) -> Result<Self> {
        let spec = BandPassSpec {
            low_cutoff_hz: low_hz,
            high_cutoff_hz: high_hz,
            order,
            zero_phase: true,
        };
        spec.validate(sampling_rate_hz)?;

        let fs2 = 2.0 * sampling_rate_hz;
        let warp = |f: f64| fs2 * (PI * f / sampling_rate_hz).tan();
        let (w_lo, w_hi) = (warp(low_hz), warp(high_hz));
        let bw = w_hi - w_lo;
        let w0 = (w_lo * w_hi).sqrt();

        let n = order / 2;
        let mut poles = Vec::with_capacity(order);
        for k in 0..n {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            let proto = Complex64::from_polar(1.0, theta);
            let half = proto * (bw / 2.0);
            let root = (half * half - w0 * w0).sqrt();
            for s in [half + root, half - root] {
                poles.push((fs2 + s) / (fs2 - s));
            }
        }

        // Zeros sit at z = 1 and z = -1, n of each. Sections whose poles lie
        // nearest z = 1 take a double zero there (high-pass), those nearest
        // z = -1 take a double zero at Nyquist (low-pass), and an odd middle
        // section takes one of each.
        let mut denominators = pair_poles(&poles);
        // ascending a1 = descending pole real part
        denominators.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let sections_n = denominators.len();
        // digital centre frequency: the bilinear image of w0
        let omega0 = 2.0 * (w0 / fs2).atan();
        let z_inv0 = Complex64::from_polar(1.0, -omega0);

        let sections = denominators
            .into_iter()
            .enumerate()
            .map(|(i, a)| {
                let b = if i < sections_n / 2 {
                    [1.0, -2.0, 1.0]
                } else if i >= sections_n - sections_n / 2 {
                    [1.0, 2.0, 1.0]
                } else {
                    [1.0, 0.0, -1.0]
                };
                let g = Biquad { b, a }.response(z_inv0).norm();
                Biquad { b: b.map(|v| v / g), a }
            })
            .collect();

        Ok(Self { sections, order })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Complex response of a single causal pass at `freq_hz`.
    pub fn frequency_response(&self, freq_hz: f64, sampling_rate_hz: f64) -> Complex64 {
        let omega = 2.0 * PI * freq_hz / sampling_rate_hz;
        let z_inv = Complex64::from_polar(1.0, -omega);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    /// Single-pass magnitude in decibels.
    pub fn magnitude_db(&self, freq_hz: f64, sampling_rate_hz: f64) -> f64 {
        20.0 * self.frequency_response(freq_hz, sampling_rate_hz).norm().log10()
    }

    /// One causal pass. The initial state is the steady state for the mean
    /// of the leading tenth of `data`, so a DC offset starts settled.
    pub fn filter_in_place(&self, data: &mut [f64]) {
        if data.is_empty() {
            return;
        }
        let lead = &data[..data.len().div_ceil(10)];
        let mut level = lead.iter().sum::<f64>() / lead.len() as f64;
        for section in &self.sections {
            section.run(data, section.steady_state(level));
            level *= section.dc_gain();
        }
    }

    /// Forward-backward filtering of `x`, symmetrised over both pass orders.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        if x.len() < 2 {
            return x.to_vec();
        }
        let pad = (3 * self.order).min(x.len() - 1);
        let ext = odd_extension(x, pad);

        // forward then backward
        let mut fb = ext.clone();
        self.filter_in_place(&mut fb);
        fb.reverse();
        self.filter_in_place(&mut fb);
        fb.reverse();

        // backward then forward
        let mut bf = ext;
        bf.reverse();
        self.filter_in_place(&mut bf);
        bf.reverse();
        self.filter_in_place(&mut bf);

        fb[pad..pad + x.len()]
            .iter()
            .zip(&bf[pad..pad + x.len()])
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }
}

/// Second-order denominators `[a1, a2]`, ordered by pole radius.
fn pair_poles(poles: &[Complex64]) -> Vec<[f64; 2]> {
    const IMAG_EPS: f64 = 1e-12;
    let mut complex: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > IMAG_EPS).collect();
    let mut real: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= IMAG_EPS).map(|p| p.re).collect();
    complex.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    real.sort_by(f64::total_cmp);

    let mut out: Vec<[f64; 2]> = complex.iter().map(|p| [-2.0 * p.re, p.norm_sqr()]).collect();
    for pair in real.chunks(2) {
        match *pair {
            [p, q] => out.push([-(p + q), p * q]),
            [p] => out.push([-p, 0.0]),
            _ => unreachable!(),
        }
    }
    out
}

fn odd_extension(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let (first, last) = (x[0], x[n - 1]);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|k| 2.0 * first - x[k]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|k| 2.0 * last - x[n - 1 - k]));
    ext
}

/// Band-pass `w` with a Butterworth design; zero-phase when requested.
pub fn band_pass(w: &Waveform, spec: &BandPassSpec) -> Result<Waveform> {
    spec.validate(w.sampling_rate_hz())?;
    if w.samples().iter().any(|v| !v.is_finite()) {
        return Err(Error::data("band_pass input contains non-finite samples"));
    }
    let filter = SosFilter::butterworth_band_pass(
        spec.low_cutoff_hz,
        spec.high_cutoff_hz,
        spec.order,
        w.sampling_rate_hz(),
    )?;
    let out = if spec.zero_phase {
        filter.filtfilt(w.samples())
    } else {
        let mut data = w.samples().to_vec();
        filter.filter_in_place(&mut data);
        data
    };
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("band_pass produced non-finite output"));
    }
    w.with_samples(out)
}
