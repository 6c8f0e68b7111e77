//! Utterances, phone segmentation and dataset splitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::alignment::{validate_entries, AlignmentEntry, DEFAULT_SILENCE_LABELS};
use super::mel::MelSpectrogram;
use crate::error::{Error, Result};

/// Labels that mark silence or pauses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SilenceLabels(pub Vec<String>);

impl Default for SilenceLabels {
    fn default() -> Self {
        Self(DEFAULT_SILENCE_LABELS.iter().map(|s| s.to_string()).collect())
    }
}

impl SilenceLabels {
    pub fn is_silence(&self, label: &str) -> bool {
        self.0.iter().any(|s| s.eq_ignore_ascii_case(label))
    }
}

/// One aligned utterance with its log-mel features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub audio_path: String,
    pub phone_sequence: Vec<String>,
    pub alignment: Vec<AlignmentEntry>,
    pub mel: MelSpectrogram,
}

impl Utterance {
    /// Builds an utterance, checking that the phone sequence equals the
    /// alignment's non-silence labels in order.
    pub fn new(
        id: impl Into<String>,
        audio_path: impl Into<String>,
        phone_sequence: Vec<String>,
        alignment: Vec<AlignmentEntry>,
        mel: MelSpectrogram,
        silence: &SilenceLabels,
    ) -> Result<Self> {
        let id = id.into();
        validate_entries(&alignment)?;
        let aligned: Vec<&str> = alignment
            .iter()
            .filter(|e| !silence.is_silence(&e.label))
            .map(|e| e.label.as_str())
            .collect();
        if aligned.is_empty() {
            return Err(Error::Validation(format!("utterance {id}: alignment contains only silence")));
        }
        if aligned.len() != phone_sequence.len() || aligned.iter().zip(&phone_sequence).any(|(a, p)| a != p) {
            return Err(Error::Validation(format!(
                "utterance {id}: phone sequence {:?} does not match aligned phones {:?}",
                phone_sequence, aligned
            )));
        }
        Ok(Self {
            id,
            audio_path: audio_path.into(),
            phone_sequence,
            alignment,
            mel,
        })
    }

    pub fn num_phones(&self) -> usize {
        self.phone_sequence.len()
    }
}

/// The mel frames aligned to one phone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhoneSegment {
    pub utterance_id: String,
    pub index_in_utterance: usize,
    pub phone: String,
    /// First frame of the segment inside the parent utterance.
    pub start_frame: usize,
    pub mel: MelSpectrogram,
}

impl PhoneSegment {
    pub fn n_frames(&self) -> usize {
        self.mel.n_frames()
    }

    pub fn frame_range(&self) -> std::ops::Range<usize> {
        self.start_frame..self.start_frame + self.mel.n_frames()
    }
}

/// Maps a time in seconds to a frame boundary (half away from zero).
pub fn time_to_frame(time: f64, hop_seconds: f64) -> i64 {
    (time / hop_seconds).round() as i64
}

/// Frame range `[round(start/hop), round(end/hop))` clamped to `n_frames`.
pub fn entry_frame_range(entry: &AlignmentEntry, hop_seconds: f64, n_frames: usize) -> (usize, usize) {
    let clamp = |f: i64| f.clamp(0, n_frames as i64) as usize;
    (clamp(time_to_frame(entry.start, hop_seconds)), clamp(time_to_frame(entry.end, hop_seconds)))
}

/// Splits an utterance into one segment per non-silence alignment entry.
pub fn segment_utterance(utt: &Utterance, silence: &SilenceLabels) -> Result<Vec<PhoneSegment>> {
    let hop = utt.mel.frame_shift;
    if !(hop > 0.0) {
        return Err(Error::Validation(format!("utterance {}: mel frame shift must be positive", utt.id)));
    }
    let n = utt.mel.n_frames();
    let mut out = Vec::with_capacity(utt.num_phones());
    for entry in utt.alignment.iter().filter(|e| !silence.is_silence(&e.label)) {
        let (start, end) = entry_frame_range(entry, hop, n);
        if start >= end {
            return Err(Error::Validation(format!(
                "utterance {}: entry {:?} [{}, {}) s maps to empty frame range [{start}, {end})",
                utt.id, entry.label, entry.start, entry.end
            )));
        }
        out.push(PhoneSegment {
            utterance_id: utt.id.clone(),
            index_in_utterance: out.len(),
            phone: entry.label.clone(),
            start_frame: start,
            mel: utt.mel.slice(start, end)?,
        });
    }
    if out.is_empty() {
        return Err(Error::Validation(format!("utterance {}: no phone segments", utt.id)));
    }
    Ok(out)
}

/// Deterministic shuffled split into `round(n * train_fraction)` and the rest.
pub fn split_dataset<T: Clone>(items: &[T], train_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Validation(format!("train fraction {train_fraction} must lie in (0, 1)")));
    }
    if items.len() < 2 {
        return Err(Error::Validation(format!("need at least 2 items to split, got {}", items.len())));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (items.len() as f64 * train_fraction).round() as usize;
    let train = order[..n_train].iter().map(|&i| items[i].clone()).collect();
    let test = order[n_train..].iter().map(|&i| items[i].clone()).collect();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_utt(entries: Vec<AlignmentEntry>, hop: f64, frames: usize) -> Result<Utterance> {
        let phones = entries
            .iter()
            .filter(|e| !SilenceLabels::default().is_silence(&e.label))
            .map(|e| e.label.clone())
            .collect();
        let data = (0..frames * 2).map(|i| i as f32).collect();
        let mel = MelSpectrogram::new(frames, 2, data, hop).unwrap();
        Utterance::new("u", "u.wav", phones, entries, mel, &SilenceLabels::default())
    }

    #[test]
    fn frame_ranges_round_each_boundary() {
        let utt = toy_utt(
            vec![
                AlignmentEntry::new("sil", 0.0, 0.10),
                AlignmentEntry::new("HH", 0.10, 0.18),
                AlignmentEntry::new("AH", 0.18, 0.30),
            ],
            0.0116,
            30,
        )
        .unwrap();
        let segs = segment_utterance(&utt, &SilenceLabels::default()).unwrap();
        let ranges: Vec<_> = segs.iter().map(|s| s.frame_range()).collect();
        assert_eq!(ranges, vec![9..16, 16..26]);
        assert_eq!(segs[1].mel.frame(0), utt.mel.frame(16));
    }

    #[test]
    fn all_silence_is_an_error() {
        assert!(toy_utt(vec![AlignmentEntry::new("sil", 0.0, 0.3)], 0.01, 30).is_err());
    }

    #[test]
    fn single_phone_covers_everything() {
        let utt = toy_utt(vec![AlignmentEntry::new("AA", 0.0, 0.3)], 0.01, 30).unwrap();
        let segs = segment_utterance(&utt, &SilenceLabels::default()).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].frame_range(), 0..30);
    }

    #[test]
    fn sub_frame_entries_error_instead_of_dropping() {
        let utt = toy_utt(
            vec![AlignmentEntry::new("AA", 0.0, 0.1), AlignmentEntry::new("B", 0.1, 0.102)],
            0.01,
            30,
        )
        .unwrap();
        let err = segment_utterance(&utt, &SilenceLabels::default()).unwrap_err();
        assert!(err.to_string().contains("\"B\""), "{err}");
    }

    #[test]
    fn mismatched_phone_sequence_is_rejected() {
        let mel = MelSpectrogram::new(10, 1, vec![0.0; 10], 0.01).unwrap();
        let r = Utterance::new(
            "u",
            "",
            vec!["B".into()],
            vec![AlignmentEntry::new("AA", 0.0, 0.1)],
            mel,
            &SilenceLabels::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn split_is_ninety_ten_and_deterministic() {
        let items: Vec<usize> = (0..100).collect();
        let (a, b) = split_dataset(&items, 0.9, 4).unwrap();
        assert_eq!((a.len(), b.len()), (90, 10));
        assert_eq!(split_dataset(&items, 0.9, 4).unwrap(), (a, b));
    }

    #[test]
    fn split_is_a_partition() {
        let items: Vec<usize> = (0..10).collect();
        let (a, b) = split_dataset(&items, 0.5, 17).unwrap();
        let mut all: Vec<_> = a.iter().chain(&b).copied().collect();
        assert!(a.iter().all(|x| !b.contains(x)));
        all.sort();
        assert_eq!(all, items);
        assert!(split_dataset(&items[..1], 0.5, 0).is_err());
        assert!(split_dataset(&items, 1.0, 0).is_err());
    }
}
