//! Moving-threshold key-moment detection on a short-time energy envelope.
//!
//! The envelope is cropped to `[t_start, t_end]`. A baseline mean and
//! standard deviation are taken over the first `t0` milliseconds of the crop.
//! Each later sample is compared with the baseline: a deviation of at least
//! `threshold_multiplier * sigma` extends the current above-threshold run and
//! freezes the baseline; anything else folds every sample seen so far into the
//! baseline and ends the run. Once a run grows longer than `L_points`, the
//! key moment is reported at crop index `t - P`.

use serde::{Deserialize, Serialize};

use crate::dsp::{index_to_ms, ms_to_index, SteSeries};
use crate::error::{Error, Result};

/// Hyperparameters of one detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub t_start_ms: f64,
    pub t_end_ms: f64,
    pub t0_ms: f64,
    #[serde(rename = "L_points")]
    pub l_points: usize,
    pub ste_window: usize,
    /// Absolute lower bound on sigma; `None` means `1e-12 * max(crop)`.
    pub sigma_floor: Option<f64>,
    pub threshold_multiplier: f64,
    /// Reset the run counter on a below-threshold sample. With `false` the
    /// counter only ever grows.
    pub reset_run: bool,
}

/// Relative sigma floor applied when no absolute floor is configured.
pub const RELATIVE_SIGMA_FLOOR: f64 = 1e-12;

impl DetectorConfig {
    /// Latch release: 20..50 ms, t0 = 10 ms, L = 300.
    pub fn t1_default() -> Self {
        Self {
            t_start_ms: 20.0,
            t_end_ms: 50.0,
            ..Self::t2_default()
        }
    }

    /// Contact touch: 50..75 ms, t0 = 10 ms, L = 300.
    pub fn t2_default() -> Self {
        Self {
            t_start_ms: 50.0,
            t_end_ms: 75.0,
            t0_ms: 10.0,
            l_points: 300,
            ste_window: 600,
            sigma_floor: None,
            threshold_multiplier: 3.0,
            reset_run: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.t_start_ms, self.t_end_ms, self.t0_ms, self.threshold_multiplier]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("detector parameters must be finite"));
        }
        if !(0.0 <= self.t_start_ms && self.t_start_ms < self.t_end_ms) {
            return Err(Error::config(format!(
                "detector needs 0 <= t_start ({}) < t_end ({})",
                self.t_start_ms, self.t_end_ms
            )));
        }
        if !(0.0 < self.t0_ms && self.t0_ms < self.t_end_ms - self.t_start_ms) {
            return Err(Error::config(format!(
                "detector needs 0 < t0 ({}) < t_end - t_start ({})",
                self.t0_ms,
                self.t_end_ms - self.t_start_ms
            )));
        }
        if self.l_points < 1 {
            return Err(Error::config("L_points must be at least 1"));
        }
        if self.ste_window < 2 {
            return Err(Error::config("ste_window must be at least 2"));
        }
        if !(self.threshold_multiplier.is_finite() && self.threshold_multiplier > 0.0) {
            return Err(Error::config("threshold_multiplier must be positive"));
        }
        if let Some(floor) = self.sigma_floor {
            if !(floor.is_finite() && floor >= 0.0) {
                return Err(Error::config("sigma_floor must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn apply(mut self, o: &DetectorOverrides) -> Self {
        if let Some(v) = o.t_start_ms {
            self.t_start_ms = v;
        }
        if let Some(v) = o.t_end_ms {
            self.t_end_ms = v;
        }
        if let Some(v) = o.t0_ms {
            self.t0_ms = v;
        }
        if let Some(v) = o.l_points {
            self.l_points = v;
        }
        if let Some(v) = o.ste_window {
            self.ste_window = v;
        }
        if let Some(v) = o.sigma_floor {
            self.sigma_floor = Some(v);
        }
        if let Some(v) = o.threshold_multiplier {
            self.threshold_multiplier = v;
        }
        if let Some(v) = o.reset_run {
            self.reset_run = v;
        }
        self
    }
}

/// Partial detector settings layered over a default configuration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_start_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0_ms: Option<f64>,
    #[serde(rename = "L_points", skip_serializing_if = "Option::is_none")]
    pub l_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ste_window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_multiplier: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reset_run: Option<bool>,
}

/// Snapshot of the detector immediately before sample `cursor` is tested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorState {
    pub baseline_mean: f64,
    pub baseline_std: f64,
    pub run_length: usize,
    pub cursor: usize,
}

/// Detected latch-release and contact-touch times. `None` is "not detected"
/// (written as -1 in reports).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KeyMoments {
    pub t1_ms: Option<f64>,
    pub t2_ms: Option<f64>,
}

impl KeyMoments {
    /// False only when both moments are present and out of order.
    pub fn is_ordered(&self) -> bool {
        match (self.t1_ms, self.t2_ms) {
            (Some(t1), Some(t2)) => t1 < t2,
            _ => true,
        }
    }

    pub fn interval_ms(&self) -> Option<f64> {
        Some(self.t2_ms? - self.t1_ms?)
    }
}

/// Count / sum / sum-of-squares accumulator, shifted by the first sample to
/// limit cancellation. Variance is the population form, clamped at zero.
#[derive(Debug, Clone, Copy)]
struct RunningStats {
    shift: f64,
    count: usize,
    sum: f64,
    sum_sq: f64,
}

impl RunningStats {
    fn new(shift: f64) -> Self {
        Self {
            shift,
            count: 0,
            sum: 0.0,
            sum_sq: 0.0,
        }
    }

    fn extend(&mut self, values: &[f64]) {
        for v in values {
            let d = v - self.shift;
            self.sum += d;
            self.sum_sq += d * d;
        }
        self.count += values.len();
    }

    fn mean_std(&self) -> (f64, f64) {
        let n = self.count as f64;
        let m = self.sum / n;
        let var = (self.sum_sq / n - m * m).max(0.0);
        (self.shift + m, var.sqrt())
    }
}

/// Core moving-threshold scan over an already-cropped series.
///
/// Returns the crop index of the key moment. `t0 >= 1` and
/// `t0 < series.len()` are the caller's responsibility.
pub fn moving_threshold_scan(
    series: &[f64],
    t0: usize,
    l_points: usize,
    multiplier: f64,
    sigma_floor: f64,
    reset_run: bool,
    mut observe: impl FnMut(&DetectorState),
) -> Option<usize> {
    let mut stats = RunningStats::new(series[0]);
    stats.extend(&series[..t0]);
    let mut absorbed = t0;
    let (mut mean, mut std) = stats.mean_std();
    let mut run = 0usize;

    for (t, &value) in series.iter().enumerate().skip(t0) {
        observe(&DetectorState {
            baseline_mean: mean,
            baseline_std: std,
            run_length: run,
            cursor: t,
        });
        if (value - mean).abs() >= multiplier * std.max(sigma_floor) {
            run += 1;
        } else {
            stats.extend(&series[absorbed..=t]);
            absorbed = t + 1;
            (mean, std) = stats.mean_std();
            if reset_run {
                run = 0;
            }
        }
        if run > l_points {
            return Some(t - run);
        }
    }
    None
}

/// Crop bounds `[start, end]` (inclusive) and `t0` in samples.
fn crop(ste: &SteSeries, cfg: &DetectorConfig) -> Result<(usize, usize, usize)> {
    let fs = ste.sampling_rate_hz();
    let offset = ste.t0_offset_ms();
    let start = ms_to_index(cfg.t_start_ms, offset, fs);
    let end = ms_to_index(cfg.t_end_ms, offset, fs);
    if start < 0 || end as usize >= ste.len() {
        return Err(Error::data(format!(
            "STE of {} samples ({:.3} ms from {offset} ms) does not cover the detection interval [{}, {}] ms",
            ste.len(),
            ste.len() as f64 * 1000.0 / fs,
            cfg.t_start_ms,
            cfg.t_end_ms
        )));
    }
    let (start, end) = (start as usize, end as usize);
    let t0 = ms_to_index(cfg.t0_ms, 0.0, fs);
    if t0 < 1 || t0 as usize > end - start {
        return Err(Error::config(format!(
            "cropped interval of {} samples is shorter than t0 ({t0} samples)",
            end - start + 1
        )));
    }
    Ok((start, end, t0 as usize))
}

/// Runs the detector and reports every state it passes through.
pub fn detect_key_moment_traced(
    ste: &SteSeries,
    cfg: &DetectorConfig,
    observe: impl FnMut(&DetectorState),
) -> Result<Option<f64>> {
    cfg.validate()?;
    if ste.is_empty() {
        return Err(Error::data("empty STE series"));
    }
    let (start, end, t0) = crop(ste, cfg)?;
    let series = &ste.values()[start..=end];
    // an all-zero crop still needs a positive floor, or 0 >= k * 0 fires
    let floor = cfg.sigma_floor.unwrap_or_else(|| {
        (RELATIVE_SIGMA_FLOOR * series.iter().fold(0.0_f64, |m, &v| m.max(v))).max(f64::MIN_POSITIVE)
    });
    let hit = moving_threshold_scan(
        series,
        t0,
        cfg.l_points,
        cfg.threshold_multiplier,
        floor,
        cfg.reset_run,
        observe,
    );
    Ok(hit.map(|idx| index_to_ms(start + idx, ste.t0_offset_ms(), ste.sampling_rate_hz())))
}

/// Key moment in milliseconds after the trigger, or `None` if no run of
/// more than `L_points` above-threshold samples occurs.
pub fn detect_key_moment(ste: &SteSeries, cfg: &DetectorConfig) -> Result<Option<f64>> {
    detect_key_moment_traced(ste, cfg, |_| {})
}

pub fn detect_t1(ste: &SteSeries, overrides: &DetectorOverrides) -> Result<Option<f64>> {
    detect_key_moment(ste, &DetectorConfig::t1_default().apply(overrides))
}

pub fn detect_t2(ste: &SteSeries, overrides: &DetectorOverrides) -> Result<Option<f64>> {
    detect_key_moment(ste, &DetectorConfig::t2_default().apply(overrides))
}

/// Both moments; logs a warning when they come out of order.
pub fn detect_key_moments(ste: &SteSeries, t1: &DetectorConfig, t2: &DetectorConfig) -> Result<KeyMoments> {
    let moments = KeyMoments {
        t1_ms: detect_key_moment(ste, t1)?,
        t2_ms: detect_key_moment(ste, t2)?,
    };
    if !moments.is_ordered() {
        log::warn!("t1 ({:?} ms) is not before t2 ({:?} ms)", moments.t1_ms, moments.t2_ms);
    }
    Ok(moments)
}
