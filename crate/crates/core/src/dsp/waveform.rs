use crate::error::{Error, Result};

/// Uniformly sampled amplitude series.
///
/// Holds at least two finite samples and a positive sampling rate. Sample 0
/// sits `t0_offset_ms` after the close-coil trigger.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sampling_rate_hz: f64,
    t0_offset_ms: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sampling_rate_hz: f64) -> Result<Self> {
        Self::with_offset(samples, sampling_rate_hz, 0.0)
    }

    pub fn with_offset(samples: Vec<f64>, sampling_rate_hz: f64, t0_offset_ms: f64) -> Result<Self> {
        if !(sampling_rate_hz.is_finite() && sampling_rate_hz > 0.0) {
            return Err(Error::config(format!(
                "sampling rate must be positive, got {sampling_rate_hz}"
            )));
        }
        if !t0_offset_ms.is_finite() {
            return Err(Error::config("t0 offset must be finite"));
        }
        if samples.len() < 2 {
            return Err(Error::data(format!(
                "waveform needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite sample at index {pos}")));
        }
        Ok(Self {
            samples,
            sampling_rate_hz,
            t0_offset_ms,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn t0_offset_ms(&self) -> f64 {
        self.t0_offset_ms
    }

    /// Record length in milliseconds (`len / fs`).
    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / self.sampling_rate_hz
    }

    pub fn time_ms(&self, idx: usize) -> f64 {
        super::index_to_ms(idx, self.t0_offset_ms, self.sampling_rate_hz)
    }

    /// Same clock, new samples. Length and finiteness are re-validated.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::with_offset(samples, self.sampling_rate_hz, self.t0_offset_ms)
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        self.with_samples(self.samples.iter().map(|v| alpha * v).collect())
    }

    pub fn reversed(&self) -> Self {
        let mut samples = self.samples.clone();
        samples.reverse();
        Self { samples, ..*self }
    }
}
