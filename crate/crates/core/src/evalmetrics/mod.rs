//! Objective evaluation: pitch extraction, voicing and pitch error rates,
//! mel cepstral distortion, embedding separability and embedding export.

pub mod dtw;
pub mod export;
pub mod mcd;
pub mod pitch;
pub mod probe;
pub mod separability;

use serde::{Deserialize, Serialize};

pub use export::{
    embeddings_to_tsv,
    embedding_records, export_embeddings, parse_embeddings_tsv, read_asr_manifest, read_embeddings_tsv,
    sample_segments, write_asr_manifest, write_embeddings_tsv, AsrManifestEntry, EmbeddingKind, EmbeddingRecord,
};
pub use mcd::{mcd, mcd_cepstra, mcd_frames, mel_cepstrum, MCD_SCALE};
pub use pitch::{align_tracks, extract_pitch, f0_counts, ffe, gpe, vde, F0Counts, PitchConfig, PitchTrack};
pub use probe::{accuracy, Probe, ProbeConfig};
pub use separability::embedding_separability;

use crate::corpus::MelSpectrogram;
use crate::error::Result;

/// Objective metrics for one reference/synthesized pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub vde: f64,
    pub gpe: f64,
    pub ffe: f64,
    pub mcd: f64,
    /// Length of the aligned pitch tracks.
    pub n_frames: usize,
    /// `false` when no aligned frame was voiced in both tracks.
    pub gpe_defined: bool,
}

/// Pitch metrics after aligning the tracks, plus DTW-aligned MCD.
pub fn evaluate_pair(
    reference_audio: &[f32],
    synthesized_audio: &[f32],
    reference_mel: &MelSpectrogram,
    synthesized_mel: &MelSpectrogram,
    pitch: &PitchConfig,
) -> Result<MetricReport> {
    let r = extract_pitch(reference_audio, pitch)?;
    let s = extract_pitch(synthesized_audio, pitch)?;
    let (r, s) = align_tracks(&r, &s)?;
    let counts = f0_counts(&r, &s, 0.2)?;
    Ok(MetricReport {
        vde: counts.vde(),
        gpe: counts.gpe(),
        ffe: counts.ffe(),
        mcd: mcd(reference_mel, synthesized_mel, 13)?,
        n_frames: counts.n_frames,
        gpe_defined: counts.gpe_defined(),
    })
}

#[cfg(test)]
mod tests;
