//! Synthetic close operations and run-to-failure trajectories.
//!
//! One operation is Gaussian sensor noise plus two decaying sinusoidal
//! bursts: a weaker one at the latch release `t1` and a stronger one at the
//! contact touch `t2`. Bursts have a short exponential attack so their
//! energy does not appear instantaneously. An optional sustained tone that
//! starts a fixed delay after `t2` models a lasting change of the vibration
//! distribution after contact. The contact channel is a unit plateau that
//! ramps to zero across `t2`, crossing one half exactly at `t2`.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`). A model's output depends
//! only on its `seed` and `stream`; trajectory operations use the stream
//! given by their op number, so they can be generated in any order.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::eval::{Stage, StageBounds};
use crate::ground_truth::{ContactChannel, Pole};
use crate::io::Truths;
use crate::record::OperationRecord;

/// Tone switched on a fixed delay after contact touch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SustainedTone {
    pub delay_ms: f64,
    pub amp: f64,
    pub carrier_hz: f64,
    pub rise_ms: f64,
}

impl Default for SustainedTone {
    fn default() -> Self {
        Self {
            delay_ms: 8.0,
            amp: 0.3,
            carrier_hz: 2_000.0,
            rise_ms: 0.2,
        }
    }
}

/// Parameters of a single synthetic close operation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloseOpModel {
    pub t1_true_ms: f64,
    pub t2_true_ms: f64,
    pub latch_burst_amp: f64,
    pub contact_burst_amp: f64,
    /// Decay constant of the contact burst.
    pub burst_decay_ms: f64,
    pub latch_decay_ms: f64,
    /// Attack constant shared by both bursts.
    pub burst_rise_ms: f64,
    pub burst_carrier_hz: f64,
    pub latch_carrier_hz: f64,
    pub noise_std: f64,
    pub fs_hz: f64,
    pub duration_ms: f64,
    pub contact_fall_ms: f64,
    pub sustained: Option<SustainedTone>,
    pub seed: u64,
    pub stream: u64,
}

impl Default for CloseOpModel {
    fn default() -> Self {
        Self {
            t1_true_ms: 38.0,
            t2_true_ms: 61.0,
            latch_burst_amp: 0.2,
            contact_burst_amp: 0.2,
            burst_decay_ms: 3.0,
            latch_decay_ms: 1.0,
            burst_rise_ms: 0.25,
            burst_carrier_hz: 5_000.0,
            latch_carrier_hz: 3_000.0,
            noise_std: 0.05,
            fs_hz: 300_000.0,
            duration_ms: 200.0,
            contact_fall_ms: 0.1,
            sustained: None,
            seed: 0,
            stream: 0,
        }
    }
}

/// `20 log10(amp / noise_std)`.
pub fn snr_db(amp: f64, noise_std: f64) -> f64 {
    20.0 * (amp / noise_std).log10()
}

impl CloseOpModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fs_hz", self.fs_hz),
            ("duration_ms", self.duration_ms),
            ("burst_decay_ms", self.burst_decay_ms),
            ("latch_decay_ms", self.latch_decay_ms),
            ("burst_rise_ms", self.burst_rise_ms),
            ("burst_carrier_hz", self.burst_carrier_hz),
            ("latch_carrier_hz", self.latch_carrier_hz),
            ("contact_fall_ms", self.contact_fall_ms),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("latch_burst_amp", self.latch_burst_amp),
            ("contact_burst_amp", self.contact_burst_amp),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0 < self.t1_true_ms && self.t1_true_ms < self.t2_true_ms && self.t2_true_ms < self.duration_ms) {
            return Err(Error::config(format!(
                "need 0 < t1 ({}) < t2 ({}) < duration ({})",
                self.t1_true_ms, self.t2_true_ms, self.duration_ms
            )));
        }
        let nyquist = self.fs_hz / 2.0;
        if self.burst_carrier_hz >= nyquist || self.latch_carrier_hz >= nyquist {
            return Err(Error::config("burst carriers must lie below Nyquist"));
        }
        if self.samples() < 2 {
            return Err(Error::config("duration covers fewer than two samples"));
        }
        if let Some(s) = &self.sustained {
            if !(s.delay_ms >= 0.0 && s.amp >= 0.0 && s.rise_ms > 0.0 && s.carrier_hz > 0.0 && s.carrier_hz < nyquist) {
                return Err(Error::config("sustained tone parameters out of range"));
            }
        }
        Ok(())
    }

    pub fn samples(&self) -> usize {
        (self.duration_ms * self.fs_hz / 1000.0).round() as usize
    }

    pub fn truths(&self) -> Truths {
        Truths {
            t1_ms: self.t1_true_ms,
            t2_ms: self.t2_true_ms,
        }
    }
}

/// Normalised attack-decay envelope with unit peak.
struct Envelope {
    rise_s: f64,
    decay_s: f64,
    scale: f64,
}

impl Envelope {
    fn new(rise_ms: f64, decay_ms: f64) -> Self {
        let (rise_s, decay_s) = (rise_ms / 1000.0, decay_ms / 1000.0);
        let peak_at = rise_s * (1.0 + decay_s / rise_s).ln();
        let peak = (1.0 - (-peak_at / rise_s).exp()) * (-peak_at / decay_s).exp();
        Self {
            rise_s,
            decay_s,
            scale: 1.0 / peak,
        }
    }

    fn at(&self, d: f64) -> f64 {
        if d <= 0.0 {
            0.0
        } else {
            self.scale * (1.0 - (-d / self.rise_s).exp()) * (-d / self.decay_s).exp()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOp {
    pub record: OperationRecord,
    pub truths: Truths,
}

/// Vibration and pole-A contact channel for one operation.
pub fn gen_close_op(model: &CloseOpModel, op_number: i64) -> Result<SynthOp> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    rng.set_stream(model.stream);
    let n = model.samples();
    let fs = model.fs_hz;
    let noise = Normal::new(0.0, model.noise_std).map_err(|e| Error::config(format!("noise_std: {e}")))?;
    let phase_latch = rng.random::<f64>() * 2.0 * PI;
    let phase_contact = rng.random::<f64>() * 2.0 * PI;
    let phase_sustained = rng.random::<f64>() * 2.0 * PI;

    let t1 = model.t1_true_ms / 1000.0;
    let t2 = model.t2_true_ms / 1000.0;
    let latch = Envelope::new(model.burst_rise_ms, model.latch_decay_ms);
    let contact = Envelope::new(model.burst_rise_ms, model.burst_decay_ms);
    let (w_latch, w_contact) = (2.0 * PI * model.latch_carrier_hz, 2.0 * PI * model.burst_carrier_hz);

    let mut vibration = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / fs;
        let mut v = noise.sample(&mut rng);
        let d1 = t - t1;
        if d1 > 0.0 {
            v += model.latch_burst_amp * latch.at(d1) * (w_latch * d1 + phase_latch).sin();
        }
        let d2 = t - t2;
        if d2 > 0.0 {
            v += model.contact_burst_amp * contact.at(d2) * (w_contact * d2 + phase_contact).sin();
            if let Some(s) = &model.sustained {
                let d3 = d2 - s.delay_ms / 1000.0;
                if d3 > 0.0 {
                    let gain = 1.0 - (-d3 * 1000.0 / s.rise_ms).exp();
                    v += s.amp * gain * (2.0 * PI * s.carrier_hz * d3 + phase_sustained).sin();
                }
            }
        }
        vibration.push(v);
    }

    let fall = model.contact_fall_ms;
    let voltage: Vec<f64> = (0..n)
        .map(|i| {
            let t_ms = i as f64 * 1000.0 / fs;
            (0.5 - (t_ms - model.t2_true_ms) / fall).clamp(0.0, 1.0)
        })
        .collect();

    let record = OperationRecord::new(
        op_number,
        Waveform::new(vibration, fs)?,
        vec![ContactChannel::new(Pole::A, voltage, fs)],
    )?;
    Ok(SynthOp {
        record,
        truths: model.truths(),
    })
}

/// Closing-time drift over a breaker's life.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationModel {
    pub n_ops: usize,
    pub first_op: i64,
    /// Initiation, stationary, wearing.
    pub stage_fractions: [f64; 3],
    pub t2_start_ms: f64,
    pub t2_end_ms: f64,
    pub interval_start_ms: f64,
    pub interval_end_ms: f64,
    /// Jitter std of the true moments per stage. The wearing value is
    /// reached at end of life, growing linearly from the stationary value.
    pub stage_noise_std_ms: [f64; 3],
    pub seed: u64,
}

impl Default for DegradationModel {
    fn default() -> Self {
        Self {
            n_ops: 1000,
            first_op: 1,
            stage_fractions: [0.2, 0.55, 0.25],
            t2_start_ms: 60.0,
            t2_end_ms: 72.0,
            interval_start_ms: 23.0,
            interval_end_ms: 26.0,
            stage_noise_std_ms: [0.3, 0.1, 0.5],
            seed: 0,
        }
    }
}

/// Planned truth of one trajectory operation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannedOp {
    pub op_number: i64,
    pub stage: Stage,
    /// Noise-free trend value of `t2`.
    pub t2_mean_ms: f64,
    pub truths: Truths,
}

impl DegradationModel {
    pub fn validate(&self) -> Result<()> {
        if self.n_ops == 0 {
            return Err(Error::config("n_ops must be at least 1"));
        }
        if self.stage_fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::config("stage fractions must be positive"));
        }
        let total: f64 = self.stage_fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("stage fractions sum to {total}, not 1")));
        }
        if !(self.t2_end_ms > self.t2_start_ms && self.t2_start_ms > 0.0) {
            return Err(Error::config("need 0 < t2_start_ms < t2_end_ms"));
        }
        if !(self.interval_start_ms > 0.0 && self.interval_end_ms > 0.0) {
            return Err(Error::config("key-moment intervals must be positive"));
        }
        if self.interval_start_ms >= self.t2_start_ms {
            return Err(Error::config("interval must be shorter than t2"));
        }
        if self.stage_noise_std_ms.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::config("stage jitter must be non-negative"));
        }
        Ok(())
    }

    pub fn stage_bounds(&self) -> StageBounds {
        let n = self.n_ops as f64;
        let init = (self.stage_fractions[0] * n).round() as i64;
        let stat = ((self.stage_fractions[0] + self.stage_fractions[1]) * n).round() as i64;
        StageBounds {
            init_end: self.first_op + init,
            stat_end: self.first_op + stat,
        }
    }

    /// Trend, jitter std and interval at `op_number`.
    fn trend(&self, op_number: i64, bounds: &StageBounds) -> (Stage, f64, f64, f64) {
        let [j_init, j_stat, j_wear] = self.stage_noise_std_ms;
        let stage = crate::eval::stage_label(op_number, bounds);
        match stage {
            Stage::Initiation => (stage, self.t2_start_ms, j_init, self.interval_start_ms),
            Stage::Stationary => (stage, self.t2_start_ms, j_stat, self.interval_start_ms),
            Stage::Wearing => {
                let last = self.first_op + self.n_ops as i64 - 1;
                let span = (last - bounds.stat_end).max(1) as f64;
                let u = ((op_number - bounds.stat_end) as f64 / span).clamp(0.0, 1.0);
                (
                    stage,
                    self.t2_start_ms + (self.t2_end_ms - self.t2_start_ms) * u * u,
                    j_stat + (j_wear - j_stat) * u,
                    self.interval_start_ms + (self.interval_end_ms - self.interval_start_ms) * u,
                )
            }
        }
    }

    pub fn op_numbers(&self) -> impl Iterator<Item = i64> {
        self.first_op..self.first_op + self.n_ops as i64
    }

    /// Truth for one operation; a pure function of `(self, op_number)`.
    pub fn plan_op(&self, op_number: i64) -> PlannedOp {
        let bounds = self.stage_bounds();
        let (stage, mean, jitter, interval) = self.trend(op_number, &bounds);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(op_number as u64);
        let z: f64 = StandardNormal.sample(&mut rng);
        let t2 = mean + jitter * z;
        PlannedOp {
            op_number,
            stage,
            t2_mean_ms: mean,
            truths: Truths {
                t1_ms: t2 - interval,
                t2_ms: t2,
            },
        }
    }

    pub fn plan(&self) -> Result<Vec<PlannedOp>> {
        self.validate()?;
        Ok(self.op_numbers().map(|i| self.plan_op(i)).collect())
    }

    /// Per-op model: the template with this op's truths and random stream.
    pub fn op_model(&self, template: &CloseOpModel, planned: &PlannedOp) -> CloseOpModel {
        CloseOpModel {
            t1_true_ms: planned.truths.t1_ms,
            t2_true_ms: planned.truths.t2_ms,
            seed: self.seed,
            // waveform substreams live in the upper half of the stream space
            stream: (planned.op_number as u64) ^ (1 << 63),
            ..*template
        }
    }
}

/// Lazily generated trajectory; ops come out in op-number order.
pub fn gen_trajectory<'a>(
    deg: &'a DegradationModel,
    template: &'a CloseOpModel,
) -> Result<impl Iterator<Item = Result<SynthOp>> + 'a> {
    deg.validate()?;
    template.validate()?;
    Ok(deg.op_numbers().map(move |i| {
        let planned = deg.plan_op(i);
        gen_close_op(&deg.op_model(template, &planned), i)
    }))
}
