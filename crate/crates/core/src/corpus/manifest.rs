//! Dataset manifests: one record per utterance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::alignment::load_alignment;
use super::mel::{MelAnalyzer, MelSpectrogram};
use super::segment::{SilenceLabels, Utterance};
use super::wav::read_wav;
use crate::error::{Error, Result};

/// One utterance entry. Exactly one of `audio_path` (16-bit PCM WAV) or
/// `mel_path` (`MELSPEC1` file with precomputed features) must be set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mel_path: Option<String>,
    pub phones: Vec<String>,
    pub alignment_path: String,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: path.display().to_string(),
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

pub fn save_manifest(records: &[ManifestRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(records).expect("manifest serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads the alignment and features of one record. Relative paths resolve
/// against `base`.
pub fn load_utterance(record: &ManifestRecord, base: &Path, analyzer: &MelAnalyzer, silence: &SilenceLabels) -> Result<Utterance> {
    let alignment = load_alignment(resolve(base, &record.alignment_path))?;
    if alignment.id != record.id {
        return Err(Error::Validation(format!(
            "utterance {}: alignment file belongs to {:?}",
            record.id, alignment.id
        )));
    }
    let (mel, audio_path) = match (&record.audio_path, &record.mel_path) {
        (Some(audio), None) => {
            let path = resolve(base, audio);
            if !path.exists() {
                return Err(Error::Validation(format!(
                    "utterance {}: audio file {} not found",
                    record.id,
                    path.display()
                )));
            }
            let samples = read_wav(&path, analyzer.config().sample_rate)?;
            (analyzer.compute(&samples)?, audio.clone())
        }
        (None, Some(mel)) => {
            let path = resolve(base, mel);
            if !path.exists() {
                return Err(Error::Validation(format!(
                    "utterance {}: mel file {} not found",
                    record.id,
                    path.display()
                )));
            }
            (MelSpectrogram::load(&path)?, String::new())
        }
        _ => {
            return Err(Error::Validation(format!(
                "utterance {}: set exactly one of audio_path and mel_path",
                record.id
            )))
        }
    };
    Utterance::new(record.id.clone(), audio_path, record.phones.clone(), alignment.entries, mel, silence)
}
