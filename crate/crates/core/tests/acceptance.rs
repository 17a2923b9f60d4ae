//! Release acceptance suite. Prints one line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criterion 10 runs only when `CBKM_REAL_CORPUS` names a corpus directory
//! (optionally with `CBKM_REAL_CONFIG` pointing at a run configuration).

mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cbkm::changepoint::binseg_single;
use cbkm::config::RunConfig;
use cbkm::detect::{detect_key_moment, detect_key_moments, moving_threshold_scan, DetectorConfig};
use cbkm::dsp::{band_pass, short_time_energy, BandPassSpec, SosFilter, SteSeries, Waveform};
use cbkm::eval::{delay_corrected_rmse, rms, rmse, Moment, OperationOutcome, RmsePolicy};
use cbkm::ground_truth::extract_closing_time;
use cbkm::io::Corpus;
use cbkm::pipeline::{
    analyze, closing_times, detect_corpus, detections_csv, evaluate, report_json, synth_corpus, worker_pool,
};
use cbkm::synth::{gen_close_op, snr_db};
use rand::Rng;
use rayon::prelude::*;

enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Outcome {
    Outcome {
        verdict: Verdict::Pass,
        detail: detail.into(),
    }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome {
        verdict: Verdict::Fail,
        detail: detail.into(),
    }
}

fn judge(ok: bool, detail: String) -> Outcome {
    if ok {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn ste_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = common::rng(0x57e);
    let mut worst = 0.0_f64;
    for case in 0..100 {
        let w = if case % 2 == 0 { 32 } else { 600 };
        let amp = 10f64.powf(rng.random_range(-3.0..3.0));
        let x = common::gaussian(&mut rng, 1000, amp);
        let got = short_time_energy(&Waveform::new(x.clone(), 1000.0).unwrap(), w).unwrap();
        let want = common::ste_direct(&x, w);
        let scale = want.iter().fold(0.0_f64, |m, v| m.max(*v));
        for (g, e) in got.values().iter().zip(&want) {
            worst = worst.max((g - e).abs() / scale);
        }
    }
    let t = secs(start.elapsed());
    judge(
        worst <= 1e-9 && t < 10.0,
        format!("100 signals, T=1000, W in {{32, 600}}: max rel err {worst:.2e} (<= 1e-9), {t:.2} s (< 10 s)"),
    )
}

fn binseg_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = common::rng(0xb5);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(3..=200);
        let mut x = common::gaussian(&mut rng, n, 1.0);
        if rng.random_bool(0.5) {
            let at = rng.random_range(1..n);
            let jump = rng.random_range(-5.0..5.0);
            x[at..].iter_mut().for_each(|v| *v += jump);
        }
        let got = binseg_single(&x, 0, n).unwrap().index;
        if got != common::binseg_exhaustive(&x) {
            mismatches += 1;
        }
    }
    let t = secs(start.elapsed());
    judge(
        mismatches == 0 && t < 10.0,
        format!("1000 series, length <= 200: {mismatches} index mismatches, {t:.2} s (< 10 s)"),
    )
}

fn detector_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = common::rng(0xde7);
    let (mut mismatches, mut detected, mut worst_state) = (0, 0, 0.0_f64);
    for _ in 0..200 {
        let n = rng.random_range(100..1500);
        let s = common::envelope(&mut rng, n);
        let t0 = rng.random_range(1..n / 2);
        let l = rng.random_range(1..60);
        let k = rng.random_range(1.5..4.0);
        let reset = rng.random_bool(0.8);
        let floor = 1e-12 * s.iter().fold(0.0_f64, |m, v| m.max(*v));

        let mut states = Vec::new();
        let got = moving_threshold_scan(&s, t0, l, k, floor, reset, |st| states.push(*st));
        let (want, trace) = common::detector_replay(&s, t0, l, k, floor, reset);
        if got != want || states.len() != trace.len() {
            mismatches += 1;
            continue;
        }
        detected += usize::from(got.is_some());
        for (a, b) in states.iter().zip(&trace) {
            if a.run_length != b.run {
                mismatches += 1;
                break;
            }
            worst_state = worst_state
                .max(common::rel_err(a.baseline_mean, b.mean))
                .max((a.baseline_std - b.std).abs() / b.mean.abs().max(b.std));
        }
    }
    let t = secs(start.elapsed());
    judge(
        mismatches == 0 && worst_state <= 1e-9 && t < 10.0,
        format!(
            "200 series ({detected} with a detection): {mismatches} mismatches, \
             max baseline rel err {worst_state:.2e}, {t:.2} s (< 10 s)"
        ),
    )
}

/// Injected t2, trend t2, detected t2, change point, closing time.
type TrajectoryRow = (f64, f64, Option<f64>, Option<f64>, Option<f64>);

/// Truths and detections for every op of a synthetic trajectory.
fn run_trajectory(cfg: &RunConfig) -> Vec<TrajectoryRow> {
    let deg = cfg.synth.degradation;
    let template = cfg.synth.template();
    let plan = deg.plan().unwrap();
    let pool = worker_pool(std::thread::available_parallelism().map_or(1, |n| n.get())).unwrap();
    pool.install(|| {
        plan.par_iter()
            .map(|p| {
                let op = gen_close_op(&deg.op_model(&template, p), p.op_number).unwrap();
                let d = analyze(&op.record, cfg).unwrap();
                let gt = cfg.ground_truth;
                let ch = op.record.contact(gt.pole).unwrap();
                let t_c = extract_closing_time(ch, gt.drop_fraction, gt.plateau_ms)
                    .unwrap()
                    .t_c_ms;
                (op.truths.t2_ms, p.t2_mean_ms, d.t2_ms, d.t_cp_ms, t_c)
            })
            .collect()
    })
}

fn synthetic_end_to_end() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let template = cfg.synth.template();
    let snr = snr_db(template.contact_burst_amp, template.noise_std);
    let rows = run_trajectory(&cfg);
    let t = secs(start.elapsed());

    let residuals: Vec<f64> = rows.iter().filter_map(|r| Some(r.0 - r.2?)).collect();
    let rate = residuals.len() as f64 / rows.len() as f64;
    let rmse_ms = rms(&residuals).unwrap_or(f64::INFINITY);
    let drift = (rows[0].1, rows[rows.len() - 1].1);
    judge(
        rmse_ms <= 0.5 && rate >= 0.99 && t < 120.0 && snr >= 10.0 && rows.len() == 1000,
        format!(
            "{} ops, t2 trend {:.1} -> {:.1} ms, SNR {snr:.1} dB: t2 RMSE {rmse_ms:.4} ms (<= 0.5), \
             detection rate {:.1}% (>= 99%), {t:.1} s (< 120 s)",
            rows.len(),
            drift.0,
            drift.1,
            100.0 * rate
        ),
    )
}

fn sustained_delay() -> Outcome {
    let start = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.synth.sustained = true;
    let rows = run_trajectory(&cfg);
    let ops: Vec<OperationOutcome> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| OperationOutcome {
            op_number: i as i64 + 1,
            t_c_ms: r.4,
            t1_ms: None,
            t2_ms: r.2,
            t_cp_ms: r.3,
        })
        .collect();
    let residuals: Vec<f64> = ops.iter().filter_map(|o| o.residual(Moment::ChangePoint)).collect();
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let std = (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    let corrected = delay_corrected_rmse(&ops, cfg.evaluation.reference_ops).unwrap();
    let t = secs(start.elapsed());
    judge(
        std <= 1.0 && corrected.rmse_ms <= 0.5 && residuals.len() == ops.len(),
        format!(
            "{} ops with a change point, mean residual {mean:.3} ms: std {std:.4} ms (<= 1), \
             delay {:.3} ms over {} ops, corrected RMSE {:.4} ms (<= 0.5), {t:.1} s",
            residuals.len(),
            corrected.delay_ms,
            corrected.reference_ops,
            corrected.rmse_ms
        ),
    )
}

fn filter_contract() -> Outcome {
    let fs = 300_000.0;
    let spec = BandPassSpec::default();
    let f = SosFilter::butterworth_band_pass(spec.low_cutoff_hz, spec.high_cutoff_hz, spec.order, fs).unwrap();

    // bilinear image of the analog Butterworth band-pass magnitude
    let warp = |hz: f64| 2.0 * fs * (std::f64::consts::PI * hz / fs).tan();
    let (lo, hi) = (warp(spec.low_cutoff_hz), warp(spec.high_cutoff_hz));
    let analytic_db = |hz: f64| {
        let w = warp(hz);
        let q = (w * w - lo * hi) / (w * (hi - lo));
        -10.0 * (1.0 + q.powi(spec.order as i32)).log10()
    };
    let mut design_err = 0.0_f64;
    for hz in [
        50.0, 500.0, 2_000.0, 5_000.0, 10_000.0, 14_000.0, 30_000.0, 50_000.0, 100_000.0,
    ] {
        design_err = design_err.max((f.magnitude_db(hz, fs) - analytic_db(hz)).abs());
    }
    let at5 = f.magnitude_db(5_000.0, fs);
    let at50 = f.magnitude_db(50_000.0, fs);

    // zero phase: filtering the reversed signal gives the reversed output
    let mut rng = common::rng(0xf17);
    let x = common::gaussian(&mut rng, 30_000, 1.0);
    let fwd = band_pass(&Waveform::new(x.clone(), fs).unwrap(), &spec).unwrap();
    let rev_in: Vec<f64> = x.iter().rev().copied().collect();
    let rev = band_pass(&Waveform::new(rev_in, fs).unwrap(), &spec).unwrap();
    let peak = fwd.samples().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let sym_err = fwd
        .samples()
        .iter()
        .zip(rev.samples().iter().rev())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
        / peak;

    // and a steady in-band tone comes out without a shift
    let tone: Vec<f64> = (0..30_000)
        .map(|i| (2.0 * std::f64::consts::PI * 5_000.0 * i as f64 / fs).sin())
        .collect();
    let out = band_pass(&Waveform::new(tone.clone(), fs).unwrap(), &spec).unwrap();
    // 200 whole periods of 60 samples
    let mid = 9_000..21_000;
    let dot: f64 = mid.clone().map(|i| out.samples()[i] * tone[i]).sum();
    let cross: f64 = mid
        .map(|i| out.samples()[i] * (2.0 * std::f64::consts::PI * 5_000.0 * i as f64 / fs).cos())
        .sum();
    let phase = cross.atan2(dot).abs();

    judge(
        at5.abs() <= 0.2 && at50 <= -20.0 && design_err < 1e-6 && sym_err <= 1e-9 && phase < 1e-6,
        format!(
            "|H(5 kHz)| {at5:.4} dB (within 0.2), |H(50 kHz)| {at50:.2} dB (<= -20), \
             analytic deviation {design_err:.1e} dB, reversal err {sym_err:.1e} (<= 1e-9), 5 kHz phase {phase:.1e} rad"
        ),
    )
}

fn degenerate_inputs() -> Outcome {
    let fs = 10_000.0;
    let (t1, t2) = (DetectorConfig::t1_default(), DetectorConfig::t2_default());
    let mut notes = Vec::new();
    let mut ok = true;
    let mut check = |name: &str, good: bool| {
        ok &= good;
        notes.push(format!("{name} {}", if good { "ok" } else { "WRONG" }));
    };

    for level in [0.0, 1.0] {
        let ste = SteSeries::from_values(vec![level; 1000], fs, 0.0, 600).unwrap();
        let km = detect_key_moments(&ste, &t1, &t2).unwrap();
        check(&format!("constant {level}"), km.t1_ms.is_none() && km.t2_ms.is_none());
    }

    // a burst at 80..90 ms lies beyond the t2 window's 75 ms end
    let mut s = vec![1.0; 1000];
    for (i, v) in s.iter_mut().enumerate() {
        *v += 1e-3 * (i as f64 * 0.7).sin();
    }
    s[800..900].iter_mut().for_each(|v| *v = 100.0);
    let ste = SteSeries::from_values(s, fs, 0.0, 600).unwrap();
    check("outside window", detect_key_moment(&ste, &t2).unwrap().is_none());

    // runs of exactly L and L + 1 points starting at 65 ms
    let cfg = DetectorConfig { l_points: 20, ..t2 };
    let run = |len: usize| {
        let mut s: Vec<f64> = (0..1000).map(|i| 1.0 + 1e-3 * (i as f64 * 0.7).sin()).collect();
        s[650..650 + len].iter_mut().for_each(|v| *v = 100.0);
        detect_key_moment(&SteSeries::from_values(s, fs, 0.0, 600).unwrap(), &cfg).unwrap()
    };
    check("run of L", run(20).is_none());
    let hit = run(21);
    check("run of L+1", hit.is_some_and(|t| (t - 64.9).abs() < 1e-9));

    judge(ok, notes.join(", "))
}

fn rmse_arithmetic() -> Outcome {
    let op = |i: i64, t_c: f64, t2: f64| OperationOutcome {
        op_number: i,
        t_c_ms: Some(t_c),
        t1_ms: None,
        t2_ms: Some(t2),
        t_cp_ms: None,
    };
    let zeros = rms(&[0.0, 0.0, 0.0]).unwrap();
    let pm = rms(&[1.0, -1.0]).unwrap();
    let traj = [op(1, 61.0, 60.0), op(2, 61.0, 62.0)];
    let via_traj = rmse(&traj, Moment::T2, RmsePolicy::Exclude).unwrap().rmse_ms;
    let mixed = rms(&[3.0, -4.0, 0.0, 12.0]).unwrap();
    let want_mixed = (169.0_f64 / 4.0).sqrt();
    let ok = zeros == 0.0
        && (pm - 1.0).abs() <= 1e-12
        && (via_traj - 1.0).abs() <= 1e-12
        && (mixed - want_mixed).abs() <= 1e-12;
    judge(
        ok,
        format!("all-zero -> {zeros}, [1, -1] -> {pm}, trajectory [1, -1] -> {via_traj}, [3, -4, 0, 12] -> {mixed}"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.synth.degradation.n_ops = 24;
    cfg.synth.degradation.seed = 99;

    let mut files = Vec::new();
    for workers in [1, 8] {
        let corpus_dir = dir.path().join(format!("corpus_{workers}"));
        synth_corpus(&cfg, &corpus_dir, workers).unwrap();
        let corpus = Corpus::open(&corpus_dir).unwrap();
        let det = detect_corpus(&corpus, &cfg, workers).unwrap();
        let closing = closing_times(&corpus, &cfg, workers).unwrap();
        let report = evaluate(&det.results, &closing.results, &cfg, corpus.manifest.stage_bounds).unwrap();
        let manifest = fs::read(corpus_dir.join("manifest.json")).unwrap();
        let first_record = fs::read(corpus.record_path(&corpus.manifest.ops[0])).unwrap();
        files.push([
            manifest,
            first_record,
            detections_csv(&det.results).into_bytes(),
            report.to_csv().into_bytes(),
            report_json(&report, &cfg).into_bytes(),
        ]);
    }
    let names = ["manifest", "record", "detections.csv", "report.csv", "report.json"];
    let differing: Vec<&str> = names
        .iter()
        .zip(files[0].iter().zip(&files[1]))
        .filter(|(_, (a, b))| a != b)
        .map(|(n, _)| *n)
        .collect();
    judge(
        differing.is_empty(),
        format!("24-op corpus, 1 vs 8 workers: differing outputs {differing:?}"),
    )
}

fn real_data() -> Outcome {
    let Ok(corpus_path) = std::env::var("CBKM_REAL_CORPUS") else {
        return Outcome {
            verdict: Verdict::Skip,
            detail: "set CBKM_REAL_CORPUS to a converted corpus to run".into(),
        };
    };
    let config = std::env::var("CBKM_REAL_CONFIG").ok();
    let cfg = RunConfig::load(config.as_deref().map(Path::new)).unwrap();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let corpus = Corpus::open(Path::new(&corpus_path)).unwrap();
    let det = detect_corpus(&corpus, &cfg, workers).unwrap();
    let closing = closing_times(&corpus, &cfg, workers).unwrap();
    let report = evaluate(&det.results, &closing.results, &cfg, corpus.manifest.stage_bounds).unwrap();
    let t2 = report.summary.rmse_t2_ms.unwrap_or(f64::INFINITY);
    let cp = report.summary.rmse_cp_ms.unwrap_or(f64::INFINITY);
    judge(
        (t2 - 0.550).abs() <= 0.15 && (cp - 8.438).abs() <= 1.0,
        format!(
            "{} ops: t2 RMSE {t2:.4} ms (0.550 +- 0.15), change-point RMSE {cp:.4} ms (8.438 +- 1)",
            report.summary.n_ops
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("STE matches direct convolution", ste_oracle),
        ("binary segmentation matches exhaustive search", binseg_oracle),
        ("detector matches naive replay", detector_oracle),
        ("synthetic trajectory t2 accuracy", synthetic_end_to_end),
        ("stable change-point delay with sustained energy", sustained_delay),
        ("band-pass filter contract", filter_contract),
        ("degenerate inputs", degenerate_inputs),
        ("RMSE arithmetic", rmse_arithmetic),
        ("1 vs 8 workers byte-identical", determinism),
        ("real-data reproduction (optional)", real_data),
    ];
    panic::set_hook(Box::new(|_| {}));
    let (mut passed, mut failed, mut skipped) = (0, 0, 0);
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            fail(format!("panicked: {msg}"))
        });
        let tag = match outcome.verdict {
            Verdict::Pass => {
                passed += 1;
                "PASS"
            }
            Verdict::Fail => {
                failed += 1;
                "FAIL"
            }
            Verdict::Skip => {
                skipped += 1;
                "SKIP"
            }
        };
        println!(
            "criterion {:>2} {tag} [{:6.2} s] {name}: {}",
            i + 1,
            secs(start.elapsed()),
            outcome.detail
        );
    }
    println!("acceptance: {passed} passed, {failed} failed, {skipped} skipped");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
