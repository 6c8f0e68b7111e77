use approx::assert_relative_eq;
use plcsd_core::corpus::MelSpectrogram;
use plcsd_core::evalmetrics::dtw::dtw_path;
use plcsd_core::evalmetrics::*;
use proptest::prelude::*;

fn track(f0: Vec<f64>) -> PitchTrack {
    PitchTrack::from_f0(f0, 0.01).unwrap()
}

fn f0_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 80.0f64..300.0], len)
}

fn pair_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..60).prop_flat_map(|n| (f0_strategy(n), f0_strategy(n)))
}

fn mel_strategy(n_mels: usize) -> impl Strategy<Value = MelSpectrogram> {
    (1usize..15).prop_flat_map(move |t| {
        prop::collection::vec(-8.0f32..2.0, t * n_mels).prop_map(move |d| MelSpectrogram::new(t, n_mels, d, 0.01).unwrap())
    })
}

fn tone(hz: f64, seconds: f64) -> Vec<f32> {
    let n = (22050.0 * seconds) as usize;
    (0..n).map(|i| (0.5 * (2.0 * std::f64::consts::PI * hz * i as f64 / 22050.0).sin()) as f32).collect()
}

proptest! {
    #[test]
    fn f0_error_rates_are_bounded_and_consistent((a, b) in pair_strategy()) {
        let (r, s) = (track(a), track(b));
        let c = f0_counts(&r, &s, 0.2).unwrap();
        for v in [c.vde(), c.gpe(), c.ffe()] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(c.ffe() >= c.vde());
        prop_assert!(c.pitch_errors <= c.both_voiced);
        prop_assert_eq!(c.voicing_errors, f0_counts(&s, &r, 0.2).unwrap().voicing_errors);
        let same = f0_counts(&r, &r, 0.2).unwrap();
        prop_assert_eq!((same.voicing_errors, same.pitch_errors), (0, 0));
    }

    #[test]
    fn mcd_is_a_symmetric_nonnegative_distance(a in mel_strategy(16), b in mel_strategy(16)) {
        prop_assert_eq!(mcd(&a, &a, 13).unwrap(), 0.0);
        let ab = mcd(&a, &b, 13).unwrap();
        prop_assert!(ab >= 0.0 && ab.is_finite());
        assert_relative_eq!(ab, mcd(&b, &a, 13).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn mcd_ignores_overall_level(a in mel_strategy(16), b in mel_strategy(16), shift in -3.0f32..3.0) {
        // A constant log-level shift only moves the excluded zeroth coefficient.
        let shifted = MelSpectrogram::new(b.n_frames(), 16, b.data().iter().map(|v| v + shift).collect(), 0.01).unwrap();
        assert_relative_eq!(mcd(&a, &b, 13).unwrap(), mcd(&a, &shifted, 13).unwrap(), epsilon = 1e-5, max_relative = 1e-4);
    }

    #[test]
    fn dtw_paths_are_monotone_and_anchored(n in 1usize..20, m in 1usize..20, seed in any::<u64>()) {
        let cost = |i: usize, j: usize| ((i as u64 * 31 + j as u64 * 17) ^ seed) as f64 % 7.0;
        let path = dtw_path(n, m, cost);
        prop_assert_eq!(path[0], (0, 0));
        prop_assert_eq!(*path.last().unwrap(), (n - 1, m - 1));
        for w in path.windows(2) {
            let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            prop_assert!(di <= 1 && dj <= 1 && di + dj >= 1);
        }
    }

    #[test]
    fn silhouette_is_bounded_and_label_invariant(points in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 6..40), perm in Just([2usize, 0, 1])) {
        let labels: Vec<usize> = (0..points.len()).map(|i| i % 3).collect();
        let s = embedding_separability(&points, &labels).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        let renamed: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        assert_relative_eq!(s, embedding_separability(&points, &renamed).unwrap(), max_relative = 1e-12);
    }
}

#[test]
fn pure_tones_are_tracked() {
    let cfg = PitchConfig::default();
    for hz in [110.0, 220.0, 330.0] {
        let t = extract_pitch(&tone(hz, 0.5), &cfg).unwrap();
        let voiced: Vec<f64> = t.f0().iter().copied().filter(|&f| f > 0.0).collect();
        assert!(voiced.len() * 10 >= t.len() * 8, "{hz} Hz: {} of {} voiced", voiced.len(), t.len());
        for f in voiced {
            assert_relative_eq!(f, hz, max_relative = 0.02);
        }
    }
    let silence = extract_pitch(&vec![0.0; 11025], &cfg).unwrap();
    assert!(silence.voiced().iter().all(|v| !v));
}

#[test]
fn octave_error_is_a_gross_pitch_error() {
    let r = track(vec![100.0, 100.0, 0.0, 100.0]);
    let s = track(vec![200.0, 110.0, 0.0, 0.0]);
    let c = f0_counts(&r, &s, 0.2).unwrap();
    assert_eq!((c.voicing_errors, c.both_voiced, c.pitch_errors), (1, 2, 1));
    assert_eq!(c.vde(), 0.25);
    assert_eq!(c.gpe(), 0.5);
    assert_eq!(c.ffe(), 0.5);
}

#[test]
fn unvoiced_pairs_leave_gpe_undefined() {
    let c = f0_counts(&track(vec![0.0, 120.0]), &track(vec![150.0, 0.0]), 0.2).unwrap();
    assert!(!c.gpe_defined());
    assert_eq!(c.gpe(), 0.0);
    assert!(f0_counts(&track(vec![1.0]), &track(vec![1.0, 2.0]), 0.2).is_err());
}

#[test]
fn evaluating_a_signal_against_itself_is_error_free() {
    let audio = tone(180.0, 0.4);
    let mel = plcsd_core::corpus::compute_mel(&audio, 22050, &Default::default()).unwrap();
    let report = evaluate_pair(&audio, &audio, &mel, &mel, &PitchConfig::default()).unwrap();
    assert_eq!((report.vde, report.gpe, report.ffe, report.mcd), (0.0, 0.0, 0.0, 0.0));
    assert!(report.gpe_defined);
}

#[test]
fn probe_separates_linearly_separable_classes() {
    let x: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 3) as f64 * 3.0 + (i as f64 * 0.37).sin() * 0.3, (i as f64 * 0.11).cos()]).collect();
    let y: Vec<usize> = (0..60).map(|i| i % 3).collect();
    let probe = Probe::fit(&x, &y, 3, &ProbeConfig::default()).unwrap();
    assert_eq!(probe.accuracy(&x, &y), 1.0);
    assert_eq!(accuracy(&[0, 1, 2, 2], &[0, 1, 1, 2]), 0.75);
}
