//! Randomised comparison of the optimised routines with brute-force
//! references, as run by `cbkm oracle`.
//!
//! Every oracle draws its cases from ChaCha8 seeded with the run seed, on a
//! stream of its own, so a `(seed, cases)` pair always replays the same
//! inputs. A failing case is shrunk by dropping samples while it still
//! fails.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::changepoint::{binseg_single, cost_l2};
use crate::detect::moving_threshold_scan;
use crate::dsp::{short_time_energy, Waveform};
use crate::error::{Error, Result};

pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Oracle {
    Ste,
    Binseg,
    Cost,
    Detector,
}

impl Oracle {
    pub const ALL: [Oracle; 4] = [Oracle::Ste, Oracle::Binseg, Oracle::Cost, Oracle::Detector];

    fn stream(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Oracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Oracle::Ste => "ste",
            Oracle::Binseg => "binseg",
            Oracle::Cost => "cost",
            Oracle::Detector => "detector",
        })
    }
}

impl FromStr for Oracle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Oracle::ALL
            .into_iter()
            .find(|o| o.to_string() == s)
            .ok_or_else(|| Error::config(format!("unknown oracle {s:?}")))
    }
}

/// A minimised failing input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailingCase {
    pub case: usize,
    pub params: String,
    pub series: Vec<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub oracle: Oracle,
    pub cases: usize,
    pub max_rel_error: f64,
    pub failures: usize,
    pub first_failure: Option<FailingCase>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<9} cases={} max_rel_err={:.3e} failures={} {}",
            self.oracle.to_string(),
            self.cases,
            self.max_rel_error,
            self.failures,
            if self.passed() { "PASS" } else { "FAIL" }
        )?;
        if let Some(c) = &self.first_failure {
            write!(
                f,
                "\n  minimised case #{} ({}; {} samples): {}\n  series = {:?}",
                c.case,
                c.params,
                c.series.len(),
                c.detail,
                c.series
            )?;
        }
        Ok(())
    }
}

/// Result of checking one input: relative error and whether it passed.
struct Check {
    rel_error: f64,
    ok: bool,
    detail: String,
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / scale.max(f64::MIN_POSITIVE)
    }
}

/// Direct `sum_k x^2[n + c - k] h^2[k]` with a cosine-formula window.
pub fn ste_reference(x: &[f64], w: usize) -> Vec<f64> {
    let h2: Vec<f64> = (0..w)
        .map(|k| {
            let h = 0.54 - 0.46 * (2.0 * PI * k as f64 / (w - 1) as f64).cos();
            h * h
        })
        .collect();
    let c = (w - 1) / 2;
    (0..x.len())
        .map(|n| {
            (0..w)
                .filter_map(|k| {
                    let j = (n + c).checked_sub(k)?;
                    x.get(j).map(|v| v * v * h2[k])
                })
                .sum()
        })
        .collect()
}

/// Two-pass sum of squared deviations.
pub fn cost_reference(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum()
}

/// Exhaustive single split of the whole series, first minimum wins.
pub fn binseg_reference(x: &[f64]) -> (usize, f64) {
    let mut best = (1, f64::INFINITY);
    for t in 1..=x.len() - 2 {
        let total = cost_reference(&x[..t]) + cost_reference(&x[t..]);
        if total < best.1 {
            best = (t, total);
        }
    }
    best
}

/// Detector replay that recomputes the baseline from scratch whenever it
/// changes.
pub fn detector_reference(s: &[f64], t0: usize, l: usize, k: f64, floor: f64, reset: bool) -> Option<usize> {
    let stats = |xs: &[f64]| {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        (m, v.sqrt())
    };
    let (mut m, mut sd) = stats(&s[..t0]);
    let mut p = 0;
    for t in t0..s.len() {
        if (s[t] - m).abs() >= k * sd.max(floor) {
            p += 1;
        } else {
            (m, sd) = stats(&s[..=t]);
            if reset {
                p = 0;
            }
        }
        if p > l {
            return Some(t - p);
        }
    }
    None
}

#[derive(Debug, Clone, Copy)]
struct DetectorParams {
    t0: usize,
    l: usize,
    k: f64,
    reset: bool,
}

fn check_ste(x: &[f64], w: usize, bug: bool) -> Check {
    if w < 2 || x.len() < w.max(2) {
        return Check {
            rel_error: 0.0,
            ok: true,
            detail: "skipped".into(),
        };
    }
    let wf = Waveform::new(x.to_vec(), 1000.0).expect("finite series");
    let mut got = short_time_energy(&wf, w).expect("valid window").values().to_vec();
    if bug {
        let mid = got.len() / 2;
        got[mid] = got[mid] * (1.0 + 1e-6) + 1e-6;
    }
    let want = ste_reference(x, w);
    let (mut worst, mut at) = (0.0_f64, 0);
    for (i, (a, b)) in got.iter().zip(&want).enumerate() {
        let e = rel(*a, *b, b.abs());
        if e > worst {
            (worst, at) = (e, i);
        }
    }
    Check {
        rel_error: worst,
        ok: worst <= TOLERANCE,
        detail: format!("index {at}: optimised {} vs direct {}", got[at], want[at]),
    }
}

fn check_cost(x: &[f64], bug: bool) -> Check {
    if x.is_empty() {
        return Check {
            rel_error: 0.0,
            ok: true,
            detail: "skipped".into(),
        };
    }
    let mut got = cost_l2(x, 0, x.len()).expect("non-empty segment");
    if bug {
        got = got * (1.0 + 1e-6) + 1e-6;
    }
    let want = cost_reference(x);
    // a tiny floor keeps near-constant segments from dividing by ~0
    let energy: f64 = x.iter().map(|v| v * v).sum();
    let e = rel(got, want, want.max(1e-12 * energy));
    Check {
        rel_error: e,
        ok: e <= TOLERANCE,
        detail: format!("prefix-sum {got} vs two-pass {want}"),
    }
}

fn check_binseg(x: &[f64], bug: bool) -> Check {
    if x.len() < 3 {
        return Check {
            rel_error: 0.0,
            ok: true,
            detail: "skipped".into(),
        };
    }
    let r = binseg_single(x, 0, x.len()).expect("admissible range");
    let got = if bug { r.index + 1 } else { r.index };
    let (want, want_cost) = binseg_reference(x);
    let e = rel(r.cost_at_split, want_cost, want_cost);
    Check {
        rel_error: e,
        ok: got == want,
        detail: format!("split {got} vs exhaustive {want}"),
    }
}

fn check_detector(s: &[f64], p: DetectorParams, bug: bool) -> Check {
    if p.t0 < 1 || s.len() <= p.t0 {
        return Check {
            rel_error: 0.0,
            ok: true,
            detail: "skipped".into(),
        };
    }
    let floor = 1e-12 * s.iter().fold(0.0_f64, |m, &v| m.max(v));
    let mut got = moving_threshold_scan(s, p.t0, p.l, p.k, floor, p.reset, |_| {});
    if bug {
        got = Some(got.map_or(0, |i| i + 1));
    }
    let want = detector_reference(s, p.t0, p.l, p.k, floor, p.reset);
    Check {
        rel_error: 0.0,
        ok: got == want,
        detail: format!("running statistics {got:?} vs replay {want:?}"),
    }
}

/// Delta-debugging style shrink: drop chunks of samples while `fails` holds.
pub fn minimize(mut input: Vec<f64>, fails: impl Fn(&[f64]) -> bool) -> Vec<f64> {
    let mut chunk = input.len() / 2;
    while chunk >= 1 {
        let mut start = 0;
        let mut progressed = false;
        while start < input.len() {
            let end = (start + chunk).min(input.len());
            let mut candidate = input[..start].to_vec();
            candidate.extend_from_slice(&input[end..]);
            if !candidate.is_empty() && fails(&candidate) {
                input = candidate;
                progressed = true;
            } else {
                start += chunk;
            }
        }
        if !progressed {
            chunk /= 2;
        }
    }
    input
}

fn random_series(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let offset = rng.random_range(-5.0..5.0);
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    // piecewise-constant mean plus noise
    let jumps = rng.random_range(0..4);
    let mut cuts: Vec<usize> = (0..jumps).map(|_| rng.random_range(0..n)).collect();
    cuts.sort_unstable();
    let levels: Vec<f64> = (0..=jumps).map(|_| rng.random_range(-3.0..3.0)).collect();
    (0..n)
        .map(|i| {
            let seg = cuts.iter().filter(|&&c| c <= i).count();
            offset + scale * (levels[seg] + noise.sample(rng))
        })
        .collect()
}

/// Positive, STE-like envelope: log-normal baseline with optional bursts.
fn random_envelope(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let noise: Normal<f64> = Normal::new(0.0, rng.random_range(0.05..0.5)).expect("positive std");
    let base = 10f64.powf(rng.random_range(-6.0..2.0));
    let mut s: Vec<f64> = (0..n).map(|_| base * noise.sample(rng).exp()).collect();
    for _ in 0..rng.random_range(0..3) {
        let start = rng.random_range(0..n);
        let len = rng.random_range(1..=n - start);
        let height = base * 10f64.powf(rng.random_range(-0.5..2.0));
        for v in &mut s[start..start + len] {
            *v += height;
        }
    }
    s
}

/// Comparison of the optimised routine with its reference on one input.
type CaseCheck = Box<dyn Fn(&[f64]) -> Check>;

/// Runs `cases` random comparisons for one oracle. `bug` perturbs the
/// optimised result so the harness can be shown to catch a fault.
pub fn run_oracle(oracle: Oracle, cases: usize, seed: u64, bug: bool) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(oracle.stream());
    let mut report = OracleReport {
        oracle,
        cases,
        max_rel_error: 0.0,
        failures: 0,
        first_failure: None,
    };
    for case in 0..cases {
        let (series, params, check): (Vec<f64>, String, CaseCheck) = match oracle {
            Oracle::Ste => {
                let n = rng.random_range(2..=400);
                let w = rng.random_range(2..=n.min(64));
                let w = if rng.random_bool(0.1) { n } else { w };
                (
                    random_series(&mut rng, n),
                    format!("W={w}"),
                    Box::new(move |x| check_ste(x, w, bug)),
                )
            }
            Oracle::Cost => {
                let n = rng.random_range(1..=200);
                (
                    random_series(&mut rng, n),
                    String::new(),
                    Box::new(move |x| check_cost(x, bug)),
                )
            }
            Oracle::Binseg => {
                let n = rng.random_range(3..=200);
                (
                    random_series(&mut rng, n),
                    String::new(),
                    Box::new(move |x| check_binseg(x, bug)),
                )
            }
            Oracle::Detector => {
                let n = rng.random_range(20..=2000);
                let p = DetectorParams {
                    t0: rng.random_range(2..=n / 2),
                    l: rng.random_range(1..=60),
                    k: rng.random_range(1.5..4.0),
                    reset: rng.random_bool(0.8),
                };
                (
                    random_envelope(&mut rng, n),
                    format!("t0={} L={} k={:.4} reset={}", p.t0, p.l, p.k, p.reset),
                    Box::new(move |x| check_detector(x, p, bug)),
                )
            }
        };
        let result = check(&series);
        report.max_rel_error = report.max_rel_error.max(result.rel_error);
        if !result.ok {
            report.failures += 1;
            if report.first_failure.is_none() {
                let small = minimize(series, |x| !check(x).ok);
                let detail = check(&small).detail;
                report.first_failure = Some(FailingCase {
                    case,
                    params,
                    series: small,
                    detail,
                });
            }
        }
    }
    report
}

pub fn run_all(cases: usize, seed: u64, bug: Option<Oracle>) -> Vec<OracleReport> {
    Oracle::ALL
        .into_iter()
        .map(|o| run_oracle(o, cases, seed, bug == Some(o)))
        .collect()
}
