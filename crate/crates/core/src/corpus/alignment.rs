//! Forced-alignment files.
//!
//! One JSON object per utterance:
//!
//! ```json
//! {"id": "utt001", "entries": [{"label": "sil", "start": 0.0, "end": 0.1}, ...]}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labels treated as silence/pause unless configured otherwise.
pub const DEFAULT_SILENCE_LABELS: [&str; 3] = ["sil", "sp", ""];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentEntry {
    pub label: String,
    pub start: f64,
    pub end: f64,
}

impl AlignmentEntry {
    pub fn new(label: impl Into<String>, start: f64, end: f64) -> Self {
        Self {
            label: label.into(),
            start,
            end,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentFile {
    pub id: String,
    pub entries: Vec<AlignmentEntry>,
}

/// Checks ordering, positivity of durations and non-overlap.
pub fn validate_entries(entries: &[AlignmentEntry]) -> Result<()> {
    if entries.is_empty() {
        return Err(Error::Validation("alignment has no entries; an utterance needs at least one phone".into()));
    }
    for (i, e) in entries.iter().enumerate() {
        if !(e.start.is_finite() && e.end.is_finite()) || e.start < 0.0 {
            return Err(Error::Validation(format!("entry {i} ({:?}) has invalid times", e.label)));
        }
        if e.start >= e.end {
            return Err(Error::Validation(format!(
                "entry {i} ({:?}) has start {} >= end {}",
                e.label, e.start, e.end
            )));
        }
        if i > 0 && e.start < entries[i - 1].end {
            return Err(Error::Validation(format!(
                "entry {i} ({:?}) starting at {} overlaps the previous entry ending at {}",
                e.label,
                e.start,
                entries[i - 1].end
            )));
        }
    }
    Ok(())
}

/// Parses and validates alignment JSON text. `source` names the input in errors.
pub fn parse_alignment(text: &str, source: &str) -> Result<AlignmentFile> {
    let file: AlignmentFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        file: source.to_string(),
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    validate_entries(&file.entries)?;
    Ok(file)
}

pub fn load_alignment(path: impl AsRef<Path>) -> Result<AlignmentFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_alignment(&text, &path.display().to_string())
}

pub fn save_alignment(file: &AlignmentFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(file).expect("alignment serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_formed_file_parses_in_order() {
        let text = r#"{"id":"u1","entries":[
            {"label":"sil","start":0.0,"end":0.10},
            {"label":"HH","start":0.10,"end":0.18},
            {"label":"AH","start":0.18,"end":0.30}]}"#;
        let f = parse_alignment(text, "inline").unwrap();
        assert_eq!(f.id, "u1");
        let labels: Vec<_> = f.entries.iter().map(|e| e.label.as_str()).collect();
        assert_eq!(labels, ["sil", "HH", "AH"]);
    }

    #[test]
    fn reversed_times_are_rejected() {
        let text = r#"{"id":"u1","entries":[{"label":"AH","start":0.30,"end":0.18}]}"#;
        assert!(matches!(parse_alignment(text, "x"), Err(Error::Validation(_))));
    }

    #[test]
    fn empty_entry_list_is_rejected() {
        let text = r#"{"id":"u1","entries":[]}"#;
        assert!(matches!(parse_alignment(text, "x"), Err(Error::Validation(_))));
    }

    #[test]
    fn overlap_is_rejected() {
        let text = r#"{"id":"u1","entries":[{"label":"A","start":0.0,"end":0.2},{"label":"B","start":0.1,"end":0.3}]}"#;
        assert!(matches!(parse_alignment(text, "x"), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_json_names_the_location() {
        let text = "{\"id\":\"u1\",\n\"entries\":[{\"label\":\"A\",\"start\":0.0}]}";
        match parse_alignment(text, "bad.json") {
            Err(Error::Parse { location, message, .. }) => {
                assert!(location.contains("line 2"), "{location}");
                assert!(message.contains("end"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
