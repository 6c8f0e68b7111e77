//! Embedding TSV export and manifests for external speech recognition.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::PhoneSegment;
use crate::error::{Error, Result};
use crate::plcsd::{Group, PlcsdModel, SegmentData};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbeddingKind {
    Content,
    Style,
}

impl EmbeddingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingKind::Content => "content",
            EmbeddingKind::Style => "style",
        }
    }
}

/// One row of the embedding TSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub utterance_id: String,
    pub index: usize,
    pub phone: String,
    pub kind: EmbeddingKind,
    pub values: Vec<f32>,
}

pub const TSV_HEADER: &str = "utterance_id\tindex\tphone\tembedding_kind\tvalues...";

/// Renders records as TSV; values use the shortest text that parses back to
/// the same `f32`.
pub fn embeddings_to_tsv(records: &[EmbeddingRecord]) -> String {
    let mut out = String::new();
    out.push_str(TSV_HEADER);
    out.push('\n');
    for r in records {
        write!(out, "{}\t{}\t{}\t{}", r.utterance_id, r.index, r.phone, r.kind.as_str()).unwrap();
        for v in &r.values {
            write!(out, "\t{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_embeddings_tsv(text: &str, source: &str) -> Result<Vec<EmbeddingRecord>> {
    let perr = |line: usize, message: String| Error::Parse {
        file: source.to_string(),
        location: format!("line {line}"),
        message,
    };
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 4 {
            return Err(perr(n + 1, format!("expected at least 4 columns, found {}", cols.len())));
        }
        let kind = match cols[3] {
            "content" => EmbeddingKind::Content,
            "style" => EmbeddingKind::Style,
            other => return Err(perr(n + 1, format!("unknown embedding kind {other:?}"))),
        };
        let index = cols[1].parse().map_err(|e| perr(n + 1, format!("bad index: {e}")))?;
        let values = cols[4..]
            .iter()
            .map(|v| v.parse::<f32>().map_err(|e| perr(n + 1, format!("bad value {v:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(EmbeddingRecord {
            utterance_id: cols[0].to_string(),
            index,
            phone: cols[2].to_string(),
            kind,
            values,
        });
    }
    Ok(out)
}

pub fn write_embeddings_tsv(records: &[EmbeddingRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, embeddings_to_tsv(records)).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings_tsv(path: impl AsRef<Path>) -> Result<Vec<EmbeddingRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings_tsv(&text, &path.display().to_string())
}

/// Content and style embeddings of every segment (two records per segment).
pub fn embedding_records(model: &PlcsdModel, segments: &[PhoneSegment]) -> Result<Vec<EmbeddingRecord>> {
    let data: Vec<SegmentData> = segments.iter().map(|s| SegmentData::new(&s.mel, 0)).collect();
    let refs: Vec<&SegmentData> = data.iter().collect();
    let content = model.encode_batch(&refs, Group::ContentEncoder)?;
    let style = model.encode_batch(&refs, Group::StyleEncoder)?;
    let mut out = Vec::with_capacity(2 * segments.len());
    for ((s, c), st) in segments.iter().zip(content).zip(style) {
        for (kind, v) in [(EmbeddingKind::Content, c), (EmbeddingKind::Style, st)] {
            out.push(EmbeddingRecord {
                utterance_id: s.utterance_id.clone(),
                index: s.index_in_utterance,
                phone: s.phone.clone(),
                kind,
                values: v.iter().map(|&x| x as f32).collect(),
            });
        }
    }
    Ok(out)
}

/// Computes and writes the embedding TSV for `segments`.
pub fn export_embeddings(model: &PlcsdModel, segments: &[PhoneSegment], path: impl AsRef<Path>) -> Result<usize> {
    let records = embedding_records(model, segments)?;
    write_embeddings_tsv(&records, path)?;
    Ok(records.len())
}

/// Draws up to `per_phone` segments of each listed phone (for example seven
/// vowels with 200 segments each), deterministically under `seed`.
pub fn sample_segments(segments: &[PhoneSegment], phones: &[&str], per_phone: usize, seed: u64) -> Vec<PhoneSegment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for phone in phones {
        let mut pool: Vec<&PhoneSegment> = segments.iter().filter(|s| s.phone == *phone).collect();
        pool.shuffle(&mut rng);
        out.extend(pool.into_iter().take(per_phone).cloned());
    }
    out
}

/// One line of the manifest handed to an external recognizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsrManifestEntry {
    pub id: String,
    pub audio_path: String,
    /// Space-separated reference phone transcription.
    pub transcript: String,
}

/// Writes one JSON object per line.
pub fn write_asr_manifest(entries: &[AsrManifestEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for e in entries {
        text.push_str(&serde_json::to_string(e).map_err(|e| Error::Format(e.to_string()))?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_asr_manifest(path: impl AsRef<Path>) -> Result<Vec<AsrManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                file: path.display().to_string(),
                location: format!("line {}", n + 1),
                message: e.to_string(),
            })
        })
        .collect()
}
