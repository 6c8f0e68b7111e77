use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::*;
use crate::corpus::MelSpectrogram;

fn track(f0: &[f64]) -> PitchTrack {
    PitchTrack::from_f0(f0.to_vec(), 0.01).unwrap()
}

fn voicing(v: &[u8]) -> PitchTrack {
    track(&v.iter().map(|&b| if b == 1 { 100.0 } else { 0.0 }).collect::<Vec<_>>())
}

fn sine(freq: f64, seconds: f64, sr: u32) -> Vec<f32> {
    let n = (seconds * sr as f64) as usize;
    (0..n)
        .map(|i| (0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin()) as f32)
        .collect()
}

#[test]
fn pitch_of_a_pure_tone() {
    let cfg = PitchConfig::default();
    let t = extract_pitch(&sine(220.0, 0.5, cfg.sample_rate), &cfg).unwrap();
    assert!(t.voiced().iter().all(|&v| v));
    let mut f0 = t.f0().to_vec();
    f0.sort_by(f64::total_cmp);
    let median = f0[f0.len() / 2];
    assert!((median - 220.0).abs() < 3.0, "median {median}");
}

#[test]
fn noise_and_silence_are_unvoiced() {
    let cfg = PitchConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise: Vec<f32> = (0..cfg.sample_rate as usize / 2).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let t = extract_pitch(&noise, &cfg).unwrap();
    let unvoiced = t.voiced().iter().filter(|v| !**v).count() as f64 / t.len() as f64;
    assert!(unvoiced >= 0.9, "unvoiced fraction {unvoiced}");
    let t = extract_pitch(&vec![0.0; 4000], &cfg).unwrap();
    assert!(t.voiced().iter().all(|v| !v) && t.f0().iter().all(|&f| f == 0.0));
    assert!(extract_pitch(&[0.0; 100], &cfg).is_err());
}

#[test]
fn voicing_error_examples() {
    let r = voicing(&[1, 1, 0, 0]);
    let s = voicing(&[1, 0, 0, 1]);
    assert_eq!(vde(&r, &s).unwrap(), 0.5);
    assert_eq!(vde(&r, &r).unwrap(), 0.0);
    assert_eq!(vde(&r, &voicing(&[0, 0, 1, 1])).unwrap(), 1.0);
    // No pitch errors among the one both-voiced frame.
    assert_eq!(ffe(&r, &s, 0.2).unwrap(), 0.5);
}

#[test]
fn gross_pitch_error_examples() {
    let r = track(&[100.0]);
    assert_eq!(gpe(&r, &track(&[125.0]), 0.2).unwrap(), 1.0);
    assert_eq!(gpe(&r, &track(&[115.0]), 0.2).unwrap(), 0.0);
    assert_eq!(gpe(&r, &r, 0.2).unwrap(), 0.0);
    let all_off = ffe(&track(&[100.0, 200.0]), &track(&[150.0, 100.0]), 0.2).unwrap();
    assert_eq!(all_off, 1.0);
    let c = f0_counts(&voicing(&[0, 0]), &voicing(&[0, 1]), 0.2).unwrap();
    assert!(!c.gpe_defined());
    assert_eq!(c.gpe(), 0.0);
    assert!(vde(&r, &track(&[100.0, 0.0])).is_err());
}

#[test]
fn alignment_undoes_frame_duplication() {
    let r = track(&[0.0, 110.0, 120.0, 0.0, 180.0, 90.0]);
    let doubled: Vec<f64> = r.f0().iter().flat_map(|&f| [f, f]).collect();
    let (a, b) = align_tracks(&r, &track(&doubled)).unwrap();
    assert_eq!(a.len(), b.len());
    assert_eq!(vde(&a, &b).unwrap(), 0.0);
    assert_eq!(gpe(&a, &b, 0.2).unwrap(), 0.0);
    let (a, b) = align_tracks(&r, &r).unwrap();
    assert_eq!((a, b), (r.clone(), r));
}

fn mel(frames: &[Vec<f32>]) -> MelSpectrogram {
    MelSpectrogram::from_frames(frames, 0.01).unwrap()
}

#[test]
fn mcd_identity_and_c0_exclusion() {
    let a = mel(&[vec![1.0, 2.0, 0.5, -1.0], vec![0.0, 0.25, 0.5, 0.125]]);
    assert_eq!(mcd(&a, &a, 4).unwrap(), 0.0);
    // A constant shift of a log-mel frame moves only c0.
    let shifted = mel(&[vec![3.0, 4.0, 2.5, 1.0], vec![2.0, 2.25, 2.5, 2.125]]);
    assert!(mcd(&a, &shifted, 4).unwrap() < 1e-12);
    let other = mel(&[vec![1.0, 2.0, 0.5]]);
    assert!(matches!(mcd(&a, &other, 3), Err(crate::Error::Shape(_))));
}

#[test]
fn mcd_closed_form_for_one_frame() {
    let a = vec![vec![0.0, 0.0, 0.0]];
    let b = vec![vec![5.0, 0.1, 0.2]];
    let expected = MCD_SCALE * (0.01f64 + 0.04).sqrt();
    assert!((mcd_cepstra(&a, &b) - expected).abs() < 1e-12);
    assert!((expected - 1.373).abs() < 1e-3);
}

#[test]
fn cepstrum_inverts_with_the_orthonormal_dct() {
    let frame = [0.3f32, -1.0, 2.0, 0.5, 0.25];
    let c = mel_cepstrum(&frame, 5);
    let n = frame.len() as f64;
    for (k, &x) in frame.iter().enumerate() {
        let back: f64 = c
            .iter()
            .enumerate()
            .map(|(d, v)| {
                let norm = if d == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                norm * v * (std::f64::consts::PI * d as f64 * (k as f64 + 0.5) / n).cos()
            })
            .sum();
        assert!((back - x as f64).abs() < 1e-9);
    }
}

#[test]
fn silhouette_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let normal = Normal::new(0.0, 0.1).unwrap();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (l, centre) in [(0, -10.0), (1, 10.0)] {
        for _ in 0..20 {
            points.push(vec![centre + normal.sample(&mut rng), normal.sample(&mut rng)]);
            labels.push(l);
        }
    }
    assert!(embedding_separability(&points, &labels).unwrap() > 0.9);

    let cloud: Vec<Vec<f64>> = (0..300).map(|_| vec![normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let random_labels: Vec<usize> = (0..300).map(|_| rng.gen_range(0..3)).collect();
    assert!(embedding_separability(&cloud, &random_labels).unwrap().abs() < 0.1);

    let dup = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]];
    assert_eq!(embedding_separability(&dup, &[0, 0, 1, 1]).unwrap(), 1.0);
    let same = vec![vec![0.0]; 4];
    assert_eq!(embedding_separability(&same, &[0, 0, 1, 1]).unwrap(), 0.0);
    assert!(embedding_separability(&dup, &[0, 0, 0, 1]).is_err());
    assert!(embedding_separability(&dup, &[0, 0, 0, 0]).is_err());
}

#[test]
fn probe_learns_a_separable_task_and_fails_on_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let y: Vec<usize> = x.iter().map(|v| usize::from(v[0] > 0.0)).collect();
    let p = Probe::fit(&x, &y, 2, &ProbeConfig::default()).unwrap();
    assert!(p.accuracy(&x, &y) > 0.95);
    let noise: Vec<usize> = (0..200).map(|_| rng.gen_range(0..2)).collect();
    let (tx, ty) = (&x[..150], &noise[..150]);
    let p = Probe::fit(tx, ty, 2, &ProbeConfig::default()).unwrap();
    assert!(p.accuracy(&x[150..], &noise[150..]) < 0.75);
}

#[test]
fn embedding_tsv_round_trip() {
    let records = vec![
        EmbeddingRecord {
            utterance_id: "u1".into(),
            index: 0,
            phone: "AA".into(),
            kind: EmbeddingKind::Content,
            values: vec![0.1, -3.5e-8, 1.0 / 3.0, f32::MAX],
        },
        EmbeddingRecord {
            utterance_id: "u1".into(),
            index: 0,
            phone: "AA".into(),
            kind: EmbeddingKind::Style,
            values: vec![f32::MIN_POSITIVE, 2.0, -0.0, 7.25],
        },
    ];
    let text = embeddings_to_tsv(&records);
    let back = parse_embeddings_tsv(&text, "mem").unwrap();
    assert_eq!(back.len(), 2);
    for (a, b) in records.iter().zip(&back) {
        assert_eq!(a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!((&a.utterance_id, a.index, &a.phone, a.kind), (&b.utterance_id, b.index, &b.phone, b.kind));
    }
    assert!(parse_embeddings_tsv("h\nu\t0\tAA\tbogus\t1.0\n", "mem").is_err());
}

#[test]
fn asr_manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("asr.jsonl");
    let entries = vec![AsrManifestEntry {
        id: "u".into(),
        audio_path: "out/u.wav".into(),
        transcript: "HH AH L OW".into(),
    }];
    write_asr_manifest(&entries, &p).unwrap();
    assert_eq!(read_asr_manifest(&p).unwrap(), entries);
}
