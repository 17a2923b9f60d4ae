//! Run configuration: built-in defaults, overlaid by a JSON file, overlaid by
//! command-line flags. The resolved configuration is echoed into reports.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::changepoint::ChangePointMethod;
use crate::detect::{DetectorConfig, DetectorOverrides};
use crate::dsp::BandPassSpec;
use crate::error::{Error, Result};
use crate::eval::EvaluationConfig;
use crate::ground_truth::GroundTruthConfig;
use crate::io::{ChannelMap, RecordFormat};
use crate::synth::{CloseOpModel, DegradationModel, SustainedTone};

/// Partial settings for the two detectors, resolved against their defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub t1: DetectorOverrides,
    pub t2: DetectorOverrides,
}

/// Series the change-point search runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CpSeries {
    /// Squared band-passed vibration.
    #[default]
    Squared,
    /// Short-time energy with the t2 detector's window.
    Ste,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChangePointConfig {
    pub method: ChangePointMethod,
    pub range_ms: [f64; 2],
    pub series: CpSeries,
    pub half_width_ms: f64,
    pub grid_step_ms: f64,
}

impl Default for ChangePointConfig {
    fn default() -> Self {
        Self {
            method: ChangePointMethod::Binseg,
            range_ms: [60.0, 85.0],
            series: CpSeries::Squared,
            half_width_ms: 2.0,
            grid_step_ms: 0.5,
        }
    }
}

impl ChangePointConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.range_ms;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi) {
            return Err(Error::config(format!("change-point range [{lo}, {hi}] ms is invalid")));
        }
        if !(self.half_width_ms > 0.0 && self.grid_step_ms > 0.0) {
            return Err(Error::config("change-point window sizes must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub format: RecordFormat,
    pub channels: ChannelMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub degradation: DegradationModel,
    /// Template for every op; per-op truths and streams replace its own.
    pub op: CloseOpModel,
    /// Switch the post-contact sustained tone on.
    pub sustained: bool,
    pub tone: SustainedTone,
}

impl SynthConfig {
    /// Op template with the sustained tone applied when enabled.
    pub fn template(&self) -> CloseOpModel {
        CloseOpModel {
            sustained: self.sustained.then_some(self.tone),
            ..self.op
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub detector: DetectorSection,
    pub filter: BandPassSpec,
    pub changepoint: ChangePointConfig,
    pub ground_truth: GroundTruthConfig,
    pub evaluation: EvaluationConfig,
    pub io: IoConfig,
    pub synth: SynthConfig,
    /// Fraction of unreadable records tolerated before a run fails.
    pub max_failure_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            detector: DetectorSection::default(),
            filter: BandPassSpec::default(),
            changepoint: ChangePointConfig::default(),
            ground_truth: GroundTruthConfig::default(),
            evaluation: EvaluationConfig::default(),
            io: IoConfig::default(),
            synth: SynthConfig::default(),
            max_failure_fraction: 0.01,
        }
    }
}

/// Resolved settings echoed into reports.
#[derive(Debug, Clone, Serialize)]
pub struct EffectiveConfig<'a> {
    pub t1: DetectorConfig,
    pub t2: DetectorConfig,
    #[serde(flatten)]
    pub run: &'a RunConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("config: {e}")))
    }

    /// Defaults overlaid with `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::config(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_json(&text)
            }
        }
    }

    pub fn t1(&self) -> DetectorConfig {
        DetectorConfig::t1_default().apply(&self.detector.t1)
    }

    pub fn t2(&self) -> DetectorConfig {
        DetectorConfig::t2_default().apply(&self.detector.t2)
    }

    pub fn validate(&self) -> Result<()> {
        self.t1().validate()?;
        self.t2().validate()?;
        self.filter.validate_design()?;
        self.changepoint.validate()?;
        let gt = &self.ground_truth;
        if !(gt.drop_fraction > 0.0 && gt.drop_fraction < 1.0 && gt.plateau_ms >= 1.0) {
            return Err(Error::config(
                "ground_truth needs 0 < drop_fraction < 1 and plateau_ms >= 1",
            ));
        }
        if let Some(b) = &self.evaluation.stage_bounds {
            b.validate()?;
        }
        if self.evaluation.reference_ops == 0 {
            return Err(Error::config("evaluation.reference_ops must be positive"));
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return Err(Error::config("max_failure_fraction must lie in [0, 1]"));
        }
        self.synth.degradation.validate()?;
        self.synth.template().validate()?;
        Ok(())
    }

    pub fn effective(&self) -> EffectiveConfig<'_> {
        EffectiveConfig {
            t1: self.t1(),
            t2: self.t2(),
            run: self,
        }
    }

    pub fn effective_json(&self) -> serde_json::Value {
        serde_json::to_value(self.effective()).expect("config serialises")
    }
}
