//! Scoring detections against contact-separation ground truth.
//!
//! Residuals are always `t_c - t_detected`. Operations lacking the closing
//! time or the detected moment are excluded and counted.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Everything known about one operation after detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperationOutcome {
    pub op_number: i64,
    pub t_c_ms: Option<f64>,
    pub t1_ms: Option<f64>,
    pub t2_ms: Option<f64>,
    pub t_cp_ms: Option<f64>,
}

/// Which detected quantity a residual refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Moment {
    T2,
    ChangePoint,
}

impl OperationOutcome {
    pub fn detected(&self, which: Moment) -> Option<f64> {
        match which {
            Moment::T2 => self.t2_ms,
            Moment::ChangePoint => self.t_cp_ms,
        }
    }

    pub fn residual(&self, which: Moment) -> Option<f64> {
        Some(self.t_c_ms? - self.detected(which)?)
    }

    pub fn interval(&self) -> Option<f64> {
        Some(self.t2_ms? - self.t1_ms?)
    }
}

/// Per-op values plus how many ops could not contribute.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Series {
    pub points: Vec<(i64, f64)>,
    pub excluded: usize,
}

impl Series {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|&(_, v)| v)
    }

    fn collect(traj: &[OperationOutcome], f: impl Fn(&OperationOutcome) -> Option<f64>) -> Self {
        let mut out = Series::default();
        for op in traj {
            match f(op) {
                Some(v) => out.points.push((op.op_number, v)),
                None => out.excluded += 1,
            }
        }
        out
    }
}

fn non_empty(traj: &[OperationOutcome]) -> Result<()> {
    if traj.is_empty() {
        Err(Error::data("trajectory is empty"))
    } else {
        Ok(())
    }
}

pub fn residual_series(traj: &[OperationOutcome], which: Moment) -> Result<Series> {
    non_empty(traj)?;
    Ok(Series::collect(traj, |op| op.residual(which)))
}

pub fn interval_series(traj: &[OperationOutcome]) -> Result<Series> {
    non_empty(traj)?;
    Ok(Series::collect(traj, OperationOutcome::interval))
}

/// Root mean square of a residual set.
pub fn rms(residuals: &[f64]) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::data("no contributing operations"));
    }
    let ss: f64 = residuals.iter().map(|r| r * r).sum();
    Ok((ss / residuals.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RmsePolicy {
    /// Drop ops with an absent detection; divide by the contributing count.
    #[default]
    Exclude,
    /// Divide by `i_end - i_start + 1`; an absent detection enters as the
    /// `-1` sentinel.
    Strict,
}

impl FromStr for RmsePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exclude" => Ok(Self::Exclude),
            "strict" => Ok(Self::Strict),
            other => Err(Error::config(format!("unknown RMSE policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmseValue {
    pub rmse_ms: f64,
    pub contributing: usize,
    pub excluded: usize,
}

pub const NOT_DETECTED: f64 = -1.0;

pub fn rmse(traj: &[OperationOutcome], which: Moment, policy: RmsePolicy) -> Result<RmseValue> {
    let series = residual_series(traj, which)?;
    match policy {
        RmsePolicy::Exclude => {
            let values: Vec<f64> = series.values().collect();
            Ok(RmseValue {
                rmse_ms: rms(&values)?,
                contributing: values.len(),
                excluded: series.excluded,
            })
        }
        RmsePolicy::Strict => {
            let mut ss = 0.0;
            let mut contributing = 0;
            for op in traj {
                let Some(t_c) = op.t_c_ms else { continue };
                let r = t_c - op.detected(which).unwrap_or(NOT_DETECTED);
                ss += r * r;
                contributing += 1;
            }
            if contributing == 0 {
                return Err(Error::data("no operation has a closing time"));
            }
            let first = traj.iter().map(|o| o.op_number).min().unwrap_or(0);
            let last = traj.iter().map(|o| o.op_number).max().unwrap_or(0);
            let span = (last - first + 1) as f64;
            Ok(RmseValue {
                rmse_ms: (ss / span).sqrt(),
                contributing,
                excluded: traj.len() - contributing,
            })
        }
    }
}

pub const DEFAULT_REFERENCE_OPS: usize = 5000;

/// Reference-window length for a trajectory of `n_ops` operations.
///
/// Trajectories shorter than `reference_ops` use `ceil(0.19 * n_ops)`.
pub fn reference_window(n_ops: usize, reference_ops: usize) -> usize {
    if n_ops >= reference_ops {
        reference_ops
    } else {
        (19 * n_ops).div_ceil(100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayCorrection {
    pub delay_ms: f64,
    pub rmse_ms: f64,
    pub reference_ops: usize,
    pub contributing: usize,
}

/// Mean change-point residual over the early reference window, and the RMS
/// of the residuals after subtracting it.
pub fn delay_corrected_rmse(traj: &[OperationOutcome], reference_ops: usize) -> Result<DelayCorrection> {
    non_empty(traj)?;
    if reference_ops == 0 {
        return Err(Error::config("reference_ops must be positive"));
    }
    let window = reference_window(traj.len(), reference_ops);
    if window == 0 || window > traj.len() {
        return Err(Error::data(format!(
            "trajectory of {} ops is shorter than the {window}-op reference window",
            traj.len()
        )));
    }
    let reference: Vec<f64> = traj[..window]
        .iter()
        .filter_map(|op| op.residual(Moment::ChangePoint))
        .collect();
    if reference.is_empty() {
        return Err(Error::data("no change-point residuals in the reference window"));
    }
    let delay = reference.iter().sum::<f64>() / reference.len() as f64;
    let corrected: Vec<f64> = residual_series(traj, Moment::ChangePoint)?
        .values()
        .map(|r| r - delay)
        .collect();
    Ok(DelayCorrection {
        delay_ms: delay,
        rmse_ms: rms(&corrected)?,
        reference_ops: window,
        contributing: corrected.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Initiation,
    Stationary,
    Wearing,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Initiation => "initiation",
            Stage::Stationary => "stationary",
            Stage::Wearing => "wearing",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageBounds {
    pub init_end: i64,
    pub stat_end: i64,
}

impl Default for StageBounds {
    fn default() -> Self {
        Self {
            init_end: 5000,
            stat_end: 20000,
        }
    }
}

impl StageBounds {
    pub fn validate(&self) -> Result<()> {
        if self.init_end > self.stat_end {
            return Err(Error::config(format!(
                "stage bounds out of order: init_end {} > stat_end {}",
                self.init_end, self.stat_end
            )));
        }
        Ok(())
    }
}

pub fn stage_label(op_number: i64, bounds: &StageBounds) -> Stage {
    if op_number < bounds.init_end {
        Stage::Initiation
    } else if op_number < bounds.stat_end {
        Stage::Stationary
    } else {
        Stage::Wearing
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub policy: RmsePolicy,
    pub reference_ops: usize,
    /// `None` lets the caller pick bounds (e.g. from a corpus manifest).
    pub stage_bounds: Option<StageBounds>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            policy: RmsePolicy::Exclude,
            reference_ops: DEFAULT_REFERENCE_OPS,
            stage_bounds: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageCounts {
    pub initiation: usize,
    pub stationary: usize,
    pub wearing: usize,
}

/// Aggregate numbers written to the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub n_ops: usize,
    pub rmse_policy: RmsePolicy,
    pub rmse_t2_ms: Option<f64>,
    pub rmse_t2_contributing: usize,
    pub rmse_t2_excluded: usize,
    pub rmse_cp_ms: Option<f64>,
    pub rmse_cp_contributing: usize,
    pub rmse_cp_excluded: usize,
    pub rmse_cp_delay_corrected_ms: Option<f64>,
    pub delay_reference_ms: Option<f64>,
    pub delay_reference_ops: Option<usize>,
    pub residual_cp_std_ms: Option<f64>,
    pub t1_detected: usize,
    pub t2_detected: usize,
    pub cp_detected: usize,
    pub t_c_present: usize,
    pub interval_ops: usize,
    pub stage_bounds: StageBounds,
    pub stage_counts: StageCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryReport {
    pub ops: Vec<OperationOutcome>,
    pub residual_t2: Series,
    pub residual_cp: Series,
    pub interval_t2_t1: Series,
    pub stages: Vec<Stage>,
    pub summary: ReportSummary,
}

pub const REPORT_CSV_HEADER: &str =
    "op_number,t_c_ms,t1_ms,t2_ms,t_cp_ms,residual_t2_ms,residual_cp_ms,interval_t2_t1_ms,stage";

fn population_std(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Some((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}

impl TrajectoryReport {
    /// Builds the report. `ops` must be sorted by strictly increasing op number.
    pub fn build(ops: Vec<OperationOutcome>, cfg: &EvaluationConfig, bounds: StageBounds) -> Result<Self> {
        non_empty(&ops)?;
        bounds.validate()?;
        if let Some(w) = ops.windows(2).find(|w| w[0].op_number >= w[1].op_number) {
            return Err(Error::data(format!(
                "operations must be sorted by unique op number ({} then {})",
                w[0].op_number, w[1].op_number
            )));
        }
        let residual_t2 = residual_series(&ops, Moment::T2)?;
        let residual_cp = residual_series(&ops, Moment::ChangePoint)?;
        let interval_t2_t1 = interval_series(&ops)?;
        let stages: Vec<Stage> = ops.iter().map(|o| stage_label(o.op_number, &bounds)).collect();

        let mut stage_counts = StageCounts::default();
        for s in &stages {
            match s {
                Stage::Initiation => stage_counts.initiation += 1,
                Stage::Stationary => stage_counts.stationary += 1,
                Stage::Wearing => stage_counts.wearing += 1,
            }
        }
        let t2 = rmse(&ops, Moment::T2, cfg.policy).ok();
        let cp = rmse(&ops, Moment::ChangePoint, cfg.policy).ok();
        let corrected = delay_corrected_rmse(&ops, cfg.reference_ops).ok();
        let cp_values: Vec<f64> = residual_cp.values().collect();
        let count = |f: fn(&OperationOutcome) -> bool| ops.iter().filter(|o| f(o)).count();

        let summary = ReportSummary {
            n_ops: ops.len(),
            rmse_policy: cfg.policy,
            rmse_t2_ms: t2.map(|v| v.rmse_ms),
            rmse_t2_contributing: t2.map_or(0, |v| v.contributing),
            rmse_t2_excluded: t2.map_or(ops.len(), |v| v.excluded),
            rmse_cp_ms: cp.map(|v| v.rmse_ms),
            rmse_cp_contributing: cp.map_or(0, |v| v.contributing),
            rmse_cp_excluded: cp.map_or(ops.len(), |v| v.excluded),
            rmse_cp_delay_corrected_ms: corrected.map(|c| c.rmse_ms),
            delay_reference_ms: corrected.map(|c| c.delay_ms),
            delay_reference_ops: corrected.map(|c| c.reference_ops),
            residual_cp_std_ms: population_std(&cp_values),
            t1_detected: count(|o| o.t1_ms.is_some()),
            t2_detected: count(|o| o.t2_ms.is_some()),
            cp_detected: count(|o| o.t_cp_ms.is_some()),
            t_c_present: count(|o| o.t_c_ms.is_some()),
            interval_ops: interval_t2_t1.points.len(),
            stage_bounds: bounds,
            stage_counts,
        };
        Ok(Self {
            ops,
            residual_t2,
            residual_cp,
            interval_t2_t1,
            stages,
            summary,
        })
    }

    /// One row per op; absent moments are `-1`, absent residuals are empty.
    pub fn to_csv(&self) -> String {
        let moment = |v: Option<f64>| format!("{:.6}", v.unwrap_or(NOT_DETECTED));
        let optional = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut out = String::with_capacity(96 * (self.ops.len() + 1));
        out.push_str(REPORT_CSV_HEADER);
        out.push('\n');
        for (op, stage) in self.ops.iter().zip(&self.stages) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                op.op_number,
                moment(op.t_c_ms),
                moment(op.t1_ms),
                moment(op.t2_ms),
                moment(op.t_cp_ms),
                optional(op.residual(Moment::T2)),
                optional(op.residual(Moment::ChangePoint)),
                optional(op.interval()),
                stage
            );
        }
        out
    }
}
