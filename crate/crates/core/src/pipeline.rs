//! End-to-end processing: per-record analysis, corpus-wide detection and
//! evaluation, and synthetic corpus generation.
//!
//! Records are processed on a dedicated rayon pool. Results are collected in
//! manifest order, so output never depends on the worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::changepoint::{binseg_single, bottomup_single, window_single, ChangePointMethod};
use crate::config::{CpSeries, RunConfig};
use crate::detect::detect_key_moment;
use crate::dsp::{band_pass, ms_to_index, short_time_energy, SteSeries};
use crate::error::{Error, Result};
use crate::eval::{OperationOutcome, StageBounds, TrajectoryReport, NOT_DETECTED};
use crate::ground_truth::extract_closing_time;
use crate::io::{read_record, write_record, Corpus, Manifest, ManifestEntry, CORPUS_VERSION};
use crate::record::OperationRecord;
use crate::synth::{gen_close_op, DegradationModel};

/// Detected moments of one operation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Detection {
    pub op_number: i64,
    pub t1_ms: Option<f64>,
    pub t2_ms: Option<f64>,
    pub t_cp_ms: Option<f64>,
}

pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(Error::config("worker count must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))
}

fn change_point(ste: &SteSeries, squared: &[f64], cfg: &RunConfig) -> Result<Option<f64>> {
    let cp = &cfg.changepoint;
    let (fs, offset) = (ste.sampling_rate_hz(), ste.t0_offset_ms());
    let series = match cp.series {
        CpSeries::Ste => ste.values(),
        CpSeries::Squared => squared,
    };
    let lo = ms_to_index(cp.range_ms[0], offset, fs).max(0) as usize;
    let hi = ((ms_to_index(cp.range_ms[1], offset, fs) + 1).max(0) as usize).min(series.len());
    if lo >= hi {
        return Err(Error::data(format!(
            "record does not cover the change-point range {:?} ms",
            cp.range_ms
        )));
    }
    let samples = |ms: f64| ((ms * fs / 1000.0).round() as usize).max(1);
    let result = match cp.method {
        ChangePointMethod::Binseg => binseg_single(series, lo, hi)?,
        ChangePointMethod::Window => window_single(series, lo, hi, samples(cp.half_width_ms))?,
        ChangePointMethod::Bottomup => bottomup_single(series, lo, hi, samples(cp.grid_step_ms))?,
    };
    Ok((!result.no_signal).then(|| result.with_clock(fs, offset).t_cp_ms))
}

/// Band-pass, short-time energy, both key moments and the change point.
pub fn analyze(rec: &OperationRecord, cfg: &RunConfig) -> Result<Detection> {
    let filtered = band_pass(&rec.vibration, &cfg.filter)?;
    let (t1_cfg, t2_cfg) = (cfg.t1(), cfg.t2());
    let ste2 = short_time_energy(&filtered, t2_cfg.ste_window)?;
    let ste1 = if t1_cfg.ste_window == t2_cfg.ste_window {
        None
    } else {
        Some(short_time_energy(&filtered, t1_cfg.ste_window)?)
    };
    let t1_ms = detect_key_moment(ste1.as_ref().unwrap_or(&ste2), &t1_cfg)?;
    let t2_ms = detect_key_moment(&ste2, &t2_cfg)?;
    if let (Some(a), Some(b)) = (t1_ms, t2_ms) {
        if a >= b {
            log::warn!("op {}: t1 {a:.4} ms is not before t2 {b:.4} ms", rec.op_number);
        }
    }
    let squared: Vec<f64> = match cfg.changepoint.series {
        CpSeries::Squared => filtered.samples().iter().map(|v| v * v).collect(),
        CpSeries::Ste => Vec::new(),
    };
    let t_cp_ms = change_point(&ste2, &squared, cfg)?;
    Ok(Detection {
        op_number: rec.op_number,
        t1_ms,
        t2_ms,
        t_cp_ms,
    })
}

/// Per-op results plus the ops that could not be processed.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome<T> {
    pub results: Vec<T>,
    pub failures: Vec<(i64, String)>,
    pub total: usize,
}

impl<T> BatchOutcome<T> {
    pub fn failure_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.failures.len() as f64 / self.total as f64
        }
    }

    /// Errors when more than `max_fraction` of the ops failed.
    pub fn check(&self, max_fraction: f64) -> Result<()> {
        if self.failure_fraction() > max_fraction {
            return Err(Error::data(format!(
                "{} of {} records failed ({:.2}% > {:.2}%)",
                self.failures.len(),
                self.total,
                100.0 * self.failure_fraction(),
                100.0 * max_fraction
            )));
        }
        Ok(())
    }
}

fn over_corpus<T: Send>(
    corpus: &Corpus,
    cfg: &RunConfig,
    workers: usize,
    f: impl Fn(&OperationRecord) -> Result<T> + Sync,
) -> Result<BatchOutcome<T>> {
    let pool = worker_pool(workers)?;
    let outcomes: Vec<(i64, Result<T>)> = pool.install(|| {
        corpus
            .manifest
            .ops
            .par_iter()
            .map(|entry| {
                let path = corpus.record_path(entry);
                let result = read_record(&path, &cfg.io.channels).and_then(|rec| {
                    if rec.op_number != entry.op_number {
                        return Err(Error::data(format!(
                            "{} holds op {} but the manifest lists {}",
                            path.display(),
                            rec.op_number,
                            entry.op_number
                        )));
                    }
                    f(&rec)
                });
                (entry.op_number, result)
            })
            .collect()
    });
    let total = outcomes.len();
    let mut results = Vec::with_capacity(total);
    let mut failures = Vec::new();
    for (op, r) in outcomes {
        match r {
            Ok(v) => results.push(v),
            Err(e) => {
                log::warn!("op {op}: skipped: {e}");
                failures.push((op, e.to_string()));
            }
        }
    }
    Ok(BatchOutcome {
        results,
        failures,
        total,
    })
}

pub fn detect_corpus(corpus: &Corpus, cfg: &RunConfig, workers: usize) -> Result<BatchOutcome<Detection>> {
    cfg.validate()?;
    over_corpus(corpus, cfg, workers, |rec| analyze(rec, cfg))
}

/// Closing time of every readable record, from the configured pole.
pub fn closing_times(corpus: &Corpus, cfg: &RunConfig, workers: usize) -> Result<BatchOutcome<(i64, Option<f64>)>> {
    let gt = cfg.ground_truth;
    over_corpus(corpus, cfg, workers, |rec| {
        let ch = rec
            .contact(gt.pole)
            .ok_or_else(|| Error::data(format!("no contact channel for pole {}", gt.pole)))?;
        Ok((
            rec.op_number,
            extract_closing_time(ch, gt.drop_fraction, gt.plateau_ms)?.t_c_ms,
        ))
    })
}

pub const DETECTIONS_CSV_HEADER: &str = "op_number,t1_ms,t2_ms,t_cp_ms";

fn fmt_moment(v: Option<f64>) -> String {
    format!("{:.6}", v.unwrap_or(NOT_DETECTED))
}

pub fn detections_csv(detections: &[Detection]) -> String {
    let mut out = String::with_capacity(48 * (detections.len() + 1));
    out.push_str(DETECTIONS_CSV_HEADER);
    out.push('\n');
    for d in detections {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            d.op_number,
            fmt_moment(d.t1_ms),
            fmt_moment(d.t2_ms),
            fmt_moment(d.t_cp_ms)
        );
    }
    out
}

pub fn parse_detections_csv(text: &str) -> Result<Vec<Detection>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim() == DETECTIONS_CSV_HEADER => {}
        _ => {
            return Err(Error::data(format!(
                "detections file must start with {DETECTIONS_CSV_HEADER:?}"
            )))
        }
    }
    let moment = |cell: &str, line: usize| -> Result<Option<f64>> {
        let v: f64 = cell
            .trim()
            .parse()
            .map_err(|_| Error::data(format!("line {}: bad value {cell:?}", line + 1)))?;
        Ok((v != NOT_DETECTED).then_some(v))
    };
    let mut out: Vec<Detection> = Vec::new();
    for (line, row) in lines {
        let cells: Vec<&str> = row.split(',').collect();
        if cells.len() != 4 {
            return Err(Error::data(format!("line {}: expected 4 columns", line + 1)));
        }
        let op_number = cells[0]
            .trim()
            .parse()
            .map_err(|_| Error::data(format!("line {}: bad op number", line + 1)))?;
        out.push(Detection {
            op_number,
            t1_ms: moment(cells[1], line)?,
            t2_ms: moment(cells[2], line)?,
            t_cp_ms: moment(cells[3], line)?,
        });
    }
    Ok(out)
}

/// Joins detections with closing times on op number, ascending.
pub fn join(detections: &[Detection], closing: &[(i64, Option<f64>)]) -> Vec<OperationOutcome> {
    let t_c: BTreeMap<i64, Option<f64>> = closing.iter().copied().collect();
    let mut ops: Vec<OperationOutcome> = detections
        .iter()
        .filter_map(|d| {
            t_c.get(&d.op_number).map(|&t_c_ms| OperationOutcome {
                op_number: d.op_number,
                t_c_ms,
                t1_ms: d.t1_ms,
                t2_ms: d.t2_ms,
                t_cp_ms: d.t_cp_ms,
            })
        })
        .collect();
    ops.sort_by_key(|o| o.op_number);
    ops.dedup_by_key(|o| o.op_number);
    ops
}

/// Builds the report; stage bounds come from the config, then the corpus
/// manifest, then the built-in defaults.
pub fn evaluate(
    detections: &[Detection],
    closing: &[(i64, Option<f64>)],
    cfg: &RunConfig,
    manifest_bounds: Option<StageBounds>,
) -> Result<TrajectoryReport> {
    let ops = join(detections, closing);
    if ops.is_empty() {
        return Err(Error::config("detections and ground truth share no op numbers"));
    }
    let bounds = cfg.evaluation.stage_bounds.or(manifest_bounds).unwrap_or_default();
    TrajectoryReport::build(ops, &cfg.evaluation, bounds)
}

/// Report JSON: the summary plus the resolved configuration.
pub fn report_json(report: &TrajectoryReport, cfg: &RunConfig) -> String {
    #[derive(Serialize)]
    struct Doc<'a> {
        summary: &'a crate::eval::ReportSummary,
        config: serde_json::Value,
    }
    let doc = Doc {
        summary: &report.summary,
        config: cfg.effective_json(),
    };
    serde_json::to_string_pretty(&doc).expect("report serialises") + "\n"
}

/// Generator description stored in the manifest.
#[derive(Debug, Serialize)]
struct GeneratorInfo<'a> {
    name: &'static str,
    prng: &'static str,
    seed: u64,
    n_ops: usize,
    t2_start_ms: f64,
    t2_end_ms: f64,
    degradation: &'a DegradationModel,
    op_template: crate::synth::CloseOpModel,
}

/// Writes a synthetic corpus and its manifest into `out_dir`.
pub fn synth_corpus(cfg: &RunConfig, out_dir: &Path, workers: usize) -> Result<Manifest> {
    cfg.validate()?;
    let deg = &cfg.synth.degradation;
    let template = cfg.synth.template();
    let format = cfg.io.format;
    let records_dir = out_dir.join("ops");
    fs::create_dir_all(&records_dir)?;
    let plan = deg.plan()?;
    let width = (deg.first_op + deg.n_ops as i64).max(1).to_string().len().max(6);

    let pool = worker_pool(workers)?;
    let entries: Vec<ManifestEntry> = pool.install(|| {
        plan.par_iter()
            .map(|p| -> Result<ManifestEntry> {
                let op = gen_close_op(&deg.op_model(&template, p), p.op_number)?;
                let rel = format!("ops/op_{:0width$}.{}", p.op_number, format.extension());
                write_record(&op.record, &out_dir.join(&rel), format, &cfg.io.channels)?;
                Ok(ManifestEntry {
                    op_number: p.op_number,
                    path: rel,
                    truths: Some(op.truths),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let generator = GeneratorInfo {
        name: "cbkm-synth",
        prng: "ChaCha8 (rand_chacha), stream = op number",
        seed: deg.seed,
        n_ops: deg.n_ops,
        t2_start_ms: deg.t2_start_ms,
        t2_end_ms: deg.t2_end_ms,
        degradation: deg,
        op_template: template,
    };
    let manifest = Manifest {
        corpus_version: CORPUS_VERSION,
        fs_hz: template.fs_hz,
        ops: entries,
        stage_bounds: Some(deg.stage_bounds()),
        generator: Some(serde_json::to_value(&generator)?),
    };
    Corpus::write_manifest(out_dir, &manifest)?;
    Ok(manifest)
}
