mod common;

use cbkm::changepoint::{binseg_single, cost_l2};
use cbkm::config::RunConfig;
use cbkm::detect::{detect_key_moment, DetectorConfig};
use cbkm::dsp::{band_pass, short_time_energy, SteSeries};
use cbkm::pipeline::analyze;
use cbkm::synth::{gen_close_op, CloseOpModel};
use cbkm::verify::{self, Oracle};

/// Replays the detector on the library's envelope with the test-side
/// brute-force scan and returns the moment in milliseconds.
fn replay(ste: &SteSeries, cfg: &DetectorConfig) -> Option<f64> {
    let fs = ste.sampling_rate_hz();
    let idx = |ms: f64| (ms * fs / 1000.0).round() as usize;
    let (start, end) = (idx(cfg.t_start_ms), idx(cfg.t_end_ms));
    let crop = &ste.values()[start..=end];
    let floor = (1e-12 * crop.iter().fold(0.0_f64, |m, v| m.max(*v))).max(f64::MIN_POSITIVE);
    let (hit, _) = common::detector_replay(
        crop,
        idx(cfg.t0_ms),
        cfg.l_points,
        cfg.threshold_multiplier,
        floor,
        true,
    );
    hit.map(|i| (start + i) as f64 * 1000.0 / fs)
}

fn op_envelope(model: &CloseOpModel) -> SteSeries {
    let cfg = RunConfig::default();
    let rec = gen_close_op(model, 1).unwrap().record;
    let filtered = band_pass(&rec.vibration, &cfg.filter).unwrap();
    short_time_energy(&filtered, cfg.t2().ste_window).unwrap()
}

#[test]
fn library_references_agree_with_test_references() {
    let mut rng = common::rng(3);
    for n in [3, 10, 57, 200] {
        let x = common::gaussian(&mut rng, n, 2.0);
        assert_eq!(verify::binseg_reference(&x).0, common::binseg_exhaustive(&x));
        let c = verify::cost_reference(&x);
        assert!((c - common::cost_naive(&x)).abs() <= 1e-12 * c.max(1.0));
        assert!((cost_l2(&x, 0, n).unwrap() - c).abs() <= 1e-9 * c.max(1.0));
        assert_eq!(binseg_single(&x, 0, n).unwrap().index, common::binseg_exhaustive(&x));
        if n >= 10 {
            let got = verify::ste_reference(&x, 8);
            let want = common::ste_direct(&x, 8);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0));
            }
        }
    }
}

#[test]
fn built_in_oracles_pass() {
    for report in verify::run_all(200, 5, None) {
        assert!(report.passed(), "{report}");
    }
    let caught = verify::run_oracle(Oracle::Detector, 50, 5, true);
    assert!(!caught.passed());
    assert!(caught.first_failure.is_some());
}

#[test]
fn step_envelope_is_found_one_sample_before_the_jump() {
    // |N(0, 0.01)| until 30 ms, 1.0 afterwards, at 300 kHz
    let fs = 300_000.0;
    let mut rng = common::rng(8);
    let noise = common::gaussian(&mut rng, 60_000, 0.01);
    let s: Vec<f64> = noise
        .iter()
        .enumerate()
        .map(|(i, v)| if i < 9_000 { v.abs() } else { 1.0 })
        .collect();
    let cfg = DetectorConfig {
        t_start_ms: 20.0,
        t_end_ms: 50.0,
        ..DetectorConfig::t2_default()
    };
    let ste = SteSeries::from_values(s, fs, 0.0, 600).unwrap();
    let got = detect_key_moment(&ste, &cfg).unwrap();
    assert_eq!(got, replay(&ste, &cfg));
    assert_eq!(got, Some(8_999.0 * 1000.0 / fs));
}

#[test]
fn latch_burst_detection_matches_replay() {
    let model = CloseOpModel {
        t1_true_ms: 35.0,
        seed: 2,
        ..CloseOpModel::default()
    };
    let ste = op_envelope(&model);
    let cfg = DetectorConfig::t1_default();
    let got = detect_key_moment(&ste, &cfg).unwrap();
    assert_eq!(got, replay(&ste, &cfg));
    let t = got.unwrap();
    assert!((34.0..=35.0).contains(&t), "t1 {t}");
}

#[test]
fn contact_burst_detection_matches_replay() {
    for (t2, seed) in [(61.2, 4), (72.0, 6)] {
        let model = CloseOpModel {
            t1_true_ms: t2 - 23.0,
            t2_true_ms: t2,
            seed,
            ..CloseOpModel::default()
        };
        let ste = op_envelope(&model);
        let cfg = DetectorConfig::t2_default();
        let got = detect_key_moment(&ste, &cfg).unwrap();
        assert_eq!(got, replay(&ste, &cfg));
        let t = got.unwrap();
        assert!((t2 - 1.0..=t2).contains(&t), "t2 {t} for burst at {t2}");

        let d = analyze(&gen_close_op(&model, 1).unwrap().record, &RunConfig::default()).unwrap();
        assert_eq!(d.t2_ms, got);
    }
}

#[test]
fn burst_after_the_window_is_not_detected() {
    let model = CloseOpModel {
        t1_true_ms: 40.0,
        t2_true_ms: 80.0,
        seed: 9,
        ..CloseOpModel::default()
    };
    let ste = op_envelope(&model);
    let cfg = DetectorConfig::t2_default();
    assert_eq!(detect_key_moment(&ste, &cfg).unwrap(), None);
    assert_eq!(replay(&ste, &cfg), None);
}
