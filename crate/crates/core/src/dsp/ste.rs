use std::f64::consts::PI;

use super::Waveform;
use crate::error::{Error, Result};

/// Total energy `sum x(t)^2` of a waveform.
pub fn signal_energy(w: &Waveform) -> f64 {
    w.samples().iter().map(|v| v * v).sum()
}

/// Symmetric Hamming window `0.54 - 0.46 cos(2 pi n / (W - 1))`, `0 <= n < W`.
pub fn hamming_window(len: usize) -> Result<Vec<f64>> {
    if len < 2 {
        return Err(Error::config(format!(
            "Hamming window length must be at least 2, got {len}"
        )));
    }
    let denom = (len - 1) as f64;
    // mirror the first half so h(n) == h(W - 1 - n) exactly
    let mut h: Vec<f64> = (0..len.div_ceil(2))
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / denom).cos())
        .collect();
    for n in (0..len / 2).rev() {
        h.push(h[n]);
    }
    Ok(h)
}

/// Short-time energy envelope, same length and clock as its source waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct SteSeries {
    values: Vec<f64>,
    sampling_rate_hz: f64,
    t0_offset_ms: f64,
    window_length: usize,
}

impl SteSeries {
    /// Wraps precomputed envelope values. Values must be finite and
    /// non-negative.
    pub fn from_values(
        values: Vec<f64>,
        sampling_rate_hz: f64,
        t0_offset_ms: f64,
        window_length: usize,
    ) -> Result<Self> {
        if !(sampling_rate_hz.is_finite() && sampling_rate_hz > 0.0) {
            return Err(Error::config("sampling rate must be positive"));
        }
        if let Some(pos) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::data(format!(
                "STE value at index {pos} is negative or non-finite"
            )));
        }
        Ok(Self {
            values,
            sampling_rate_hz,
            t0_offset_ms,
            window_length,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn t0_offset_ms(&self) -> f64 {
        self.t0_offset_ms
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn time_ms(&self, idx: usize) -> f64 {
        super::index_to_ms(idx, self.t0_offset_ms, self.sampling_rate_hz)
    }
}

/// `STE(n) = sum_t x(t)^2 h(n - t + c)^2` with `c = (W - 1) / 2` (integer
/// division), i.e. the centred "same" part of the full convolution of the
/// squared signal with the squared Hamming window. Samples outside the
/// record count as zero.
pub fn short_time_energy(w: &Waveform, window: usize) -> Result<SteSeries> {
    if window > w.len() {
        return Err(Error::config(format!(
            "STE window {window} exceeds signal length {}",
            w.len()
        )));
    }
    let taps: Vec<f64> = hamming_window(window)?.into_iter().map(|h| h * h).collect();
    let squared: Vec<f64> = w.samples().iter().map(|v| v * v).collect();
    let values = convolve_same(&squared, &taps);
    Ok(SteSeries {
        values,
        sampling_rate_hz: w.sampling_rate_hz(),
        t0_offset_ms: w.t0_offset_ms(),
        window_length: window,
    })
}

/// "Same"-mode convolution for a symmetric, non-negative kernel no longer
/// than the signal.
///
/// Output `n` is the dot product of the kernel with the signal slice
/// `[n + c + 1 - K, n + c]`, clipped to the record; the kernel is symmetric,
/// so the flip reduces to an offset into the taps.
fn convolve_same(signal: &[f64], taps: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let k = taps.len();
    let centre = (k - 1) / 2;
    (0..n)
        .map(|out| {
            // full-convolution index
            let full = out + centre;
            let lo = (full + 1).saturating_sub(k);
            let hi = full.min(n - 1);
            // taps index for signal[t] is full - t; walking t upward walks
            // taps downward, which for a symmetric kernel equals walking
            // upward from k - 1 - (full - lo)
            let tap_start = k - 1 - (full - lo);
            signal[lo..=hi]
                .iter()
                .zip(&taps[tap_start..tap_start + (hi - lo + 1)])
                .map(|(s, t)| s * t)
                .sum()
        })
        .collect()
}
