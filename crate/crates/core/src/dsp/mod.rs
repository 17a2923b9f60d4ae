//! Signal representations and transforms: waveform container, Butterworth
//! band-pass, signal energy, Hamming window and short-time energy.

mod filter;
mod ste;
mod waveform;

pub use filter::{band_pass, BandPassSpec, Biquad, SosFilter};
pub use ste::{hamming_window, short_time_energy, signal_energy, SteSeries};
pub use waveform::Waveform;

/// Sample index closest to `t_ms`, counted from the sample at `offset_ms`.
///
/// Uses `round(t * fs / 1000)`; 1 ms at 300 kHz is exactly 300 samples.
pub fn ms_to_index(t_ms: f64, offset_ms: f64, fs_hz: f64) -> i64 {
    ((t_ms - offset_ms) * fs_hz / 1000.0).round() as i64
}

/// Time in milliseconds of sample `idx`.
pub fn index_to_ms(idx: usize, offset_ms: f64, fs_hz: f64) -> f64 {
    offset_ms + idx as f64 * 1000.0 / fs_hz
}
