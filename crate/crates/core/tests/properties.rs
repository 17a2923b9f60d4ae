use cbkm::changepoint::{binseg_single, cost_l2};
use cbkm::detect::{detect_key_moment, DetectorConfig};
use cbkm::dsp::{band_pass, hamming_window, short_time_energy, BandPassSpec, SteSeries, Waveform};
use cbkm::eval::{rms, stage_label, Stage, StageBounds};
use cbkm::ground_truth::{extract_closing_time, ContactChannel, Pole};
use cbkm::io::{RecordFile, RecordFormat};
use proptest::prelude::*;

fn signal(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0_f64, len)
}

fn envelope(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.5..2.0_f64, len)
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hamming_window_is_symmetric_and_bounded(w in 2usize..2000) {
        let h = hamming_window(w).unwrap();
        prop_assert_eq!(h.len(), w);
        for n in 0..w {
            prop_assert!((0.08 - 1e-12..=1.0).contains(&h[n]));
            prop_assert_eq!(h[n], h[w - 1 - n]);
        }
    }

    #[test]
    fn ste_keeps_length_and_sign(x in signal(2..400), w in 2usize..64) {
        prop_assume!(w <= x.len());
        let ste = short_time_energy(&Waveform::new(x.clone(), 1000.0).unwrap(), w).unwrap();
        prop_assert_eq!(ste.len(), x.len());
        prop_assert!(ste.values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn ste_scales_quadratically(x in signal(2..400), w in 2usize..64, alpha in 0.01..100.0_f64) {
        prop_assume!(w <= x.len());
        let base = short_time_energy(&Waveform::new(x.clone(), 1000.0).unwrap(), w).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| alpha * v).collect();
        let got = short_time_energy(&Waveform::new(scaled, 1000.0).unwrap(), w).unwrap();
        let peak = max_abs(base.values()) * alpha * alpha;
        for (g, b) in got.values().iter().zip(base.values()) {
            prop_assert!((g - alpha * alpha * b).abs() <= 1e-9 * peak.max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn zero_phase_filter_commutes_with_reversal(x in signal(20..3000)) {
        let spec = BandPassSpec::default();
        let fwd = band_pass(&Waveform::new(x.clone(), 300_000.0).unwrap(), &spec).unwrap();
        let rev = band_pass(&Waveform::new(x.iter().rev().copied().collect(), 300_000.0).unwrap(), &spec).unwrap();
        let peak = max_abs(fwd.samples()).max(1e-300);
        for (a, b) in fwd.samples().iter().zip(rev.samples().iter().rev()) {
            prop_assert!((a - b).abs() <= 1e-9 * peak);
        }
    }

    #[test]
    fn cost_is_non_negative_and_splits_exactly(x in signal(2..200), cut in 0.0..1.0_f64) {
        let n = x.len();
        let t = 1 + ((n - 2) as f64 * cut) as usize;
        let whole = cost_l2(&x, 0, n).unwrap();
        let (left, right) = (cost_l2(&x, 0, t).unwrap(), cost_l2(&x, t, n).unwrap());
        prop_assert!(whole >= 0.0 && left >= 0.0 && right >= 0.0);
        // the between-segment term of the variance decomposition
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let (n1, n2) = (t as f64, (n - t) as f64);
        let between = n1 * n2 / (n1 + n2) * (mean(&x[..t]) - mean(&x[t..])).powi(2);
        prop_assert!((whole - left - right - between).abs() <= 1e-9 * whole.max(1.0));
    }

    #[test]
    fn binseg_finds_a_clean_step(n in 4usize..200, at in 0.0..1.0_f64, lo in -5.0..5.0_f64, jump in 0.5..5.0_f64) {
        let t = 1 + ((n - 3) as f64 * at) as usize;
        let x: Vec<f64> = (0..n).map(|i| if i < t { lo } else { lo + jump }).collect();
        prop_assert_eq!(binseg_single(&x, 0, n).unwrap().index, t);
    }

    #[test]
    fn binseg_ignores_affine_maps(
        noise in prop::collection::vec(-0.1..0.1_f64, 20..200),
        at in 0.2..0.8_f64,
        scale_pow in -4i32..4,
        shift in -100i32..100,
    ) {
        let n = noise.len();
        let t = (n as f64 * at) as usize;
        let x: Vec<f64> = noise.iter().enumerate().map(|(i, v)| v + if i < t { 0.0 } else { 3.0 }).collect();
        let a = 2f64.powi(scale_pow) * if shift % 2 == 0 { 1.0 } else { -1.0 };
        let y: Vec<f64> = x.iter().map(|v| a * v + shift as f64).collect();
        prop_assert_eq!(binseg_single(&x, 0, n).unwrap().index, binseg_single(&y, 0, n).unwrap().index);
    }

    #[test]
    fn detector_is_deterministic_and_bounded(s in envelope(300..600), burst_at in 120usize..290, len in 1usize..40) {
        let mut s = s;
        let end = (burst_at + len).min(s.len());
        s[burst_at..end].iter_mut().for_each(|v| *v += 50.0);
        let cfg = DetectorConfig { t_start_ms: 10.0, t_end_ms: 290.0, t0_ms: 100.0, l_points: 8, ..DetectorConfig::t2_default() };
        let ste = SteSeries::from_values(s, 1000.0, 0.0, 600).unwrap();
        let a = detect_key_moment(&ste, &cfg).unwrap();
        prop_assert_eq!(a, detect_key_moment(&ste, &cfg).unwrap());
        if let Some(t) = a {
            prop_assert!(t >= cfg.t_start_ms + cfg.t0_ms - 1.0 && t <= cfg.t_end_ms);
        }
    }

    #[test]
    fn detector_follows_time_shifts(s in envelope(300..500), burst_at in 150usize..280, shift in 1usize..50) {
        let mut s = s;
        s[burst_at..burst_at + 15].iter_mut().for_each(|v| *v += 50.0);
        let cfg = DetectorConfig { t_start_ms: 20.0, t_end_ms: 295.0, t0_ms: 100.0, l_points: 8, ..DetectorConfig::t2_default() };
        let base = detect_key_moment(&SteSeries::from_values(s.clone(), 1000.0, 0.0, 600).unwrap(), &cfg).unwrap();

        let mut shifted = vec![1.0; shift];
        shifted.extend_from_slice(&s);
        let moved = DetectorConfig { t_start_ms: cfg.t_start_ms + shift as f64, t_end_ms: cfg.t_end_ms + shift as f64, ..cfg };
        let got = detect_key_moment(&SteSeries::from_values(shifted, 1000.0, 0.0, 600).unwrap(), &moved).unwrap();
        prop_assert_eq!(got, base.map(|t| t + shift as f64));
    }

    #[test]
    fn detector_ignores_amplitude_scale(s in envelope(300..500), burst_at in 150usize..280, pow in -20i32..20) {
        let mut s = s;
        s[burst_at..burst_at + 15].iter_mut().for_each(|v| *v *= 30.0);
        let cfg = DetectorConfig { t_start_ms: 20.0, t_end_ms: 295.0, t0_ms: 100.0, l_points: 8, ..DetectorConfig::t2_default() };
        let base = detect_key_moment(&SteSeries::from_values(s.clone(), 1000.0, 0.0, 600).unwrap(), &cfg).unwrap();
        let alpha = 2f64.powi(pow);
        let scaled: Vec<f64> = s.iter().map(|v| v * alpha).collect();
        let got = detect_key_moment(&SteSeries::from_values(scaled, 1000.0, 0.0, 600).unwrap(), &cfg).unwrap();
        prop_assert_eq!(got, base);
    }

    #[test]
    fn closing_time_ignores_voltage_scale(drop_at in 20usize..400, level in 0.1..100.0_f64, alpha in 0.01..100.0_f64) {
        let v: Vec<f64> = (0..500).map(|i| if i < drop_at { level } else { 0.0 }).collect();
        let ch = ContactChannel::new(Pole::A, v.clone(), 1000.0);
        let scaled = ContactChannel::new(Pole::A, v.iter().map(|x| x * alpha).collect(), 1000.0);
        let a = extract_closing_time(&ch, 0.5, 10.0).unwrap().t_c_ms;
        prop_assert_eq!(a, extract_closing_time(&scaled, 0.5, 10.0).unwrap().t_c_ms);
        prop_assert_eq!(a, Some(drop_at as f64));
    }

    #[test]
    fn higher_drop_fraction_never_later(ramp_start in 20usize..300, ramp_len in 1usize..150, f1 in 0.05..0.95_f64, f2 in 0.05..0.95_f64) {
        let v: Vec<f64> = (0..500)
            .map(|i: usize| (1.0 - i.saturating_sub(ramp_start) as f64 / ramp_len as f64).max(0.0_f64))
            .collect();
        let ch = ContactChannel::new(Pole::A, v, 1000.0);
        let (lo, hi) = (f1.min(f2), f1.max(f2));
        let t_lo = extract_closing_time(&ch, lo, 10.0).unwrap().t_c_ms.unwrap();
        let t_hi = extract_closing_time(&ch, hi, 10.0).unwrap().t_c_ms.unwrap();
        prop_assert!(t_hi <= t_lo);
    }

    #[test]
    fn rms_is_permutation_invariant(mut r in prop::collection::vec(-50.0..50.0_f64, 1..100), seed in any::<u64>()) {
        let a = rms(&r).unwrap();
        let k = (seed % r.len() as u64) as usize;
        r.rotate_left(k);
        r.reverse();
        prop_assert!((rms(&r).unwrap() - a).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn rms_is_zero_only_for_zero_residuals(r in prop::collection::vec(prop_oneof![Just(0.0), -5.0..5.0_f64], 1..50)) {
        prop_assert_eq!(rms(&r).unwrap() == 0.0, r.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stage_label_is_monotone(a in -100i64..50_000, b in -100i64..50_000, init_end in 0i64..10_000, extra in 0i64..30_000) {
        let bounds = StageBounds { init_end, stat_end: init_end + extra };
        let rank = |s: Stage| match s { Stage::Initiation => 0, Stage::Stationary => 1, Stage::Wearing => 2 };
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(rank(stage_label(lo, &bounds)) <= rank(stage_label(hi, &bounds)));
    }

    #[test]
    fn record_files_round_trip(
        vib in prop::collection::vec(-1e6f32..1e6, 1..200),
        op_number in any::<i64>(),
        fs in 1.0..1e7_f64,
        offset in -100.0..100.0_f64,
        with_contact in any::<bool>(),
    ) {
        let mut channels = vec![("vibration".to_string(), vib.clone())];
        if with_contact {
            channels.push(("contact_A".to_string(), vib.iter().map(|v| v.abs()).collect()));
        }
        let file = RecordFile { version: 1, fs_hz: fs, op_number, t0_offset_ms: offset, channels };
        for format in [RecordFormat::Bin, RecordFormat::Csv] {
            let bytes = file.encode(format).unwrap();
            prop_assert_eq!(&RecordFile::decode(&bytes).unwrap(), &file);
        }
    }

    #[test]
    fn decoder_never_panics_on_noise(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
        let _ = RecordFile::decode(&bytes);
        let mut tagged = b"CBKM".to_vec();
        tagged.extend_from_slice(&bytes);
        let _ = RecordFile::decode(&tagged);
    }

    #[test]
    fn decoder_never_panics_on_damaged_files(
        vib in prop::collection::vec(-10f32..10.0, 1..50),
        csv in any::<bool>(),
        edits in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..8),
        cut in any::<prop::sample::Index>(),
    ) {
        let file = RecordFile { version: 1, fs_hz: 1000.0, op_number: 7, t0_offset_ms: 0.0, channels: vec![("vibration".into(), vib)] };
        let mut bytes = file.encode(if csv { RecordFormat::Csv } else { RecordFormat::Bin }).unwrap();
        for (at, b) in edits {
            let i = at.index(bytes.len());
            bytes[i] = b;
        }
        let _ = RecordFile::decode(&bytes);
        bytes.truncate(cut.index(bytes.len() + 1));
        let _ = RecordFile::decode(&bytes);
    }
}
