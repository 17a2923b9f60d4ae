//! Closing time from contact-separation voltage.
//!
//! With the breaker open a small DC voltage sits across the contacts; it
//! collapses when the contacts touch. The channel is normalised by its mean
//! over an initial plateau and the closing time is the first sample that
//! falls below `drop_fraction` of that level. Contact bounce after the first
//! touch is ignored.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::index_to_ms;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pole {
    A,
    B,
    C,
}

impl Pole {
    pub const ALL: [Pole; 3] = [Pole::A, Pole::B, Pole::C];
}

impl fmt::Display for Pole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Pole::A => "A",
            Pole::B => "B",
            Pole::C => "C",
        };
        f.write_str(s)
    }
}

impl FromStr for Pole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Pole::A),
            "B" => Ok(Pole::B),
            "C" => Ok(Pole::C),
            other => Err(Error::config(format!("unknown pole {other:?}"))),
        }
    }
}

/// Contact-separation voltage of one pole, on the vibration clock.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactChannel {
    pub pole: Pole,
    pub voltage: Vec<f64>,
    pub sampling_rate_hz: f64,
    pub t0_offset_ms: f64,
}

impl ContactChannel {
    pub fn new(pole: Pole, voltage: Vec<f64>, sampling_rate_hz: f64) -> Self {
        Self {
            pole,
            voltage,
            sampling_rate_hz,
            t0_offset_ms: 0.0,
        }
    }

    pub fn duration_ms(&self) -> f64 {
        self.voltage.len() as f64 * 1000.0 / self.sampling_rate_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosingTime {
    pub t_c_ms: Option<f64>,
    pub pole: Pole,
}

/// Settings for closing-time extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundTruthConfig {
    pub pole: Pole,
    pub drop_fraction: f64,
    pub plateau_ms: f64,
}

impl Default for GroundTruthConfig {
    fn default() -> Self {
        Self {
            pole: Pole::A,
            drop_fraction: 0.5,
            plateau_ms: 10.0,
        }
    }
}

/// Minimum plateau length accepted for normalisation.
const MIN_PLATEAU_MS: f64 = 1.0;

/// First time the normalised channel drops below `drop_fraction`.
pub fn extract_closing_time(ch: &ContactChannel, drop_fraction: f64, plateau_ms: f64) -> Result<ClosingTime> {
    if !(drop_fraction > 0.0 && drop_fraction < 1.0) {
        return Err(Error::config(format!(
            "drop_fraction must lie in (0, 1), got {drop_fraction}"
        )));
    }
    if !(ch.sampling_rate_hz.is_finite() && ch.sampling_rate_hz > 0.0) {
        return Err(Error::config("contact channel sampling rate must be positive"));
    }
    if !(plateau_ms.is_finite() && plateau_ms >= MIN_PLATEAU_MS) {
        return Err(Error::config(format!(
            "plateau must be at least {MIN_PLATEAU_MS} ms, got {plateau_ms}"
        )));
    }
    if ch.voltage.is_empty() {
        return Err(Error::data(format!("pole {} contact channel is empty", ch.pole)));
    }
    if let Some(pos) = ch.voltage.iter().position(|v| !v.is_finite()) {
        return Err(Error::data(format!("pole {} non-finite voltage at {pos}", ch.pole)));
    }
    let plateau_len = (plateau_ms * ch.sampling_rate_hz / 1000.0).round() as usize;
    let min_len = (MIN_PLATEAU_MS * ch.sampling_rate_hz / 1000.0).round().max(1.0) as usize;
    let plateau_len = plateau_len.min(ch.voltage.len());
    if plateau_len < min_len {
        return Err(Error::data(format!(
            "pole {} channel shorter than the {MIN_PLATEAU_MS} ms plateau",
            ch.pole
        )));
    }

    let plateau = &ch.voltage[..plateau_len];
    let n = plateau.len() as f64;
    let mean = plateau.iter().sum::<f64>() / n;
    let std = (plateau.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    // a live open-contact plateau sits well clear of zero
    if mean == 0.0 || mean.abs() <= 3.0 * std {
        return Err(Error::data(format!(
            "pole {} plateau mean {mean:.3e} is indistinguishable from zero (dead channel or closed breaker)",
            ch.pole
        )));
    }

    let t_c_ms = ch
        .voltage
        .iter()
        .position(|v| v / mean < drop_fraction)
        .map(|idx| index_to_ms(idx, ch.t0_offset_ms, ch.sampling_rate_hz));
    Ok(ClosingTime { t_c_ms, pole: ch.pole })
}
