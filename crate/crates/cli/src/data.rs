//! The `prepare` stage: validated features and alignments copied into a
//! cache, plus the train/validation split.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use plcsd_core::corpus::{
    load_manifest, load_utterance, save_alignment, save_manifest, segment_utterance, split_dataset, AlignmentFile, ManifestRecord,
    MelAnalyzer, PhoneSegment, Utterance,
};
use plcsd_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::artifacts::{create_dir, read_json, write_json, Layout, Sidecar};
use crate::config::{sha256_hex, LoadedConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub valid: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub id: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PrepareOutcome {
    Computed { kept: usize, rejected: usize },
    CacheHit,
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_bytes(path: &Path) -> plcsd_core::Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Hash of everything `prepare` reads: the relevant settings, the manifest
/// and every file it references. A missing file is an error naming the
/// utterance.
fn input_hash(cfg: &LoadedConfig, manifest_path: &Path, records: &[ManifestRecord]) -> plcsd_core::Result<String> {
    let base = manifest_path.parent().unwrap_or(Path::new(""));
    let c = &cfg.config;
    let settings = json!({
        "mel": c.mel,
        "silence_labels": c.silence_labels,
        "phones": c.phones,
        "train_fraction": c.train_fraction,
        "seed": c.seed,
    });
    let mut text = settings.to_string();
    text.push_str(&sha256_hex(&read_bytes(manifest_path)?));
    for r in records {
        let mut files = vec![("alignment", r.alignment_path.as_str())];
        files.extend(r.audio_path.as_deref().map(|p| ("audio", p)));
        files.extend(r.mel_path.as_deref().map(|p| ("mel", p)));
        for (kind, rel) in files {
            let path = resolve(base, rel);
            if !path.exists() {
                return Err(Error::Validation(format!("utterance {}: {kind} file {} not found", r.id, path.display())));
            }
            text.push_str(&sha256_hex(&read_bytes(&path)?));
        }
    }
    Ok(sha256_hex(text.as_bytes()))
}

fn check_utterance(cfg: &LoadedConfig, utt: &Utterance) -> plcsd_core::Result<()> {
    let inventory = cfg.config.inventory()?;
    inventory.indices(&utt.phone_sequence)?;
    if utt.mel.n_mels() != cfg.config.mel.n_mels {
        return Err(Error::Validation(format!(
            "utterance {}: features have {} bands, config expects {}",
            utt.id,
            utt.mel.n_mels(),
            cfg.config.mel.n_mels
        )));
    }
    segment_utterance(utt, &cfg.config.silence_labels)?;
    Ok(())
}

pub fn prepare(cfg: &LoadedConfig) -> anyhow::Result<PrepareOutcome> {
    let layout = Layout::new(cfg.output_dir());
    let manifest_path = cfg.resolve(&cfg.config.manifest);
    let records = load_manifest(&manifest_path)?;
    if records.is_empty() {
        return Err(Error::Validation(format!("manifest {} lists no utterances", manifest_path.display())).into());
    }
    let hash = input_hash(cfg, &manifest_path, &records)?;
    if let Ok(previous) = read_json::<Sidecar>(&layout.prepare_record()) {
        let complete = layout.prepared_manifest().exists() && layout.splits().exists();
        if complete && previous.details.get("input_hash").and_then(|v| v.as_str()) == Some(hash.as_str()) {
            info!("prepare: cache hit for {} ({} inputs unchanged)", layout.prepared().display(), records.len());
            return Ok(PrepareOutcome::CacheHit);
        }
    }

    let analyzer = MelAnalyzer::new(cfg.config.mel.clone())?;
    let base = manifest_path.parent().unwrap_or(Path::new(""));
    let prepared = layout.prepared();
    create_dir(&prepared.join("mels"))?;
    create_dir(&prepared.join("alignments"))?;
    let mut kept = Vec::new();
    let mut rejects = Vec::new();
    for r in &records {
        let loaded = load_utterance(r, base, &analyzer, &cfg.config.silence_labels).and_then(|u| check_utterance(cfg, &u).map(|_| u));
        let utt = match loaded {
            Ok(u) => u,
            Err(e @ (Error::Numeric { .. } | Error::Io { .. })) => return Err(e.into()),
            Err(e) => {
                warn!("prepare: rejecting utterance {}: {e}", r.id);
                rejects.push(Reject {
                    id: r.id.clone(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let mel_rel = format!("mels/{}.mel", r.id);
        let ali_rel = format!("alignments/{}.json", r.id);
        utt.mel.save(prepared.join(&mel_rel))?;
        save_alignment(
            &AlignmentFile {
                id: r.id.clone(),
                entries: utt.alignment.clone(),
            },
            prepared.join(&ali_rel),
        )?;
        kept.push(ManifestRecord {
            id: r.id.clone(),
            audio_path: None,
            mel_path: Some(mel_rel),
            phones: r.phones.clone(),
            alignment_path: ali_rel,
        });
    }
    let ids: Vec<String> = kept.iter().map(|r| r.id.clone()).collect();
    let (train, valid) = split_dataset(&ids, cfg.config.train_fraction, cfg.config.seed)?;
    save_manifest(&kept, layout.prepared_manifest())?;
    write_json(&layout.splits(), &Splits { train, valid })?;
    write_json(&layout.rejects(), &rejects)?;
    Sidecar::new("prepare", cfg)
        .with_input("manifest", &manifest_path)?
        .with_details(json!({
            "input_hash": hash,
            "input_count": records.len(),
            "kept": kept.len(),
            "rejected": rejects.len(),
        }))
        .write(&layout.prepare_record())?;
    info!("prepare: kept {} of {} utterances ({} rejected)", kept.len(), records.len(), rejects.len());
    Ok(PrepareOutcome::Computed {
        kept: kept.len(),
        rejected: rejects.len(),
    })
}

/// The cached dataset produced by `prepare`.
pub struct Prepared {
    pub utterances: BTreeMap<String, Utterance>,
    pub splits: Splits,
    pub record_hash: String,
}

impl Prepared {
    pub fn load(cfg: &LoadedConfig) -> anyhow::Result<Self> {
        let layout = Layout::new(cfg.output_dir());
        if !layout.prepare_record().exists() {
            return Err(Error::MissingPrerequisite(format!("no prepared dataset in {}; run `prepare` first", layout.prepared().display())).into());
        }
        let analyzer = MelAnalyzer::new(cfg.config.mel.clone())?;
        let base = layout.prepared();
        let mut utterances = BTreeMap::new();
        for r in load_manifest(layout.prepared_manifest())? {
            let u = load_utterance(&r, &base, &analyzer, &cfg.config.silence_labels)?;
            utterances.insert(r.id, u);
        }
        Ok(Self {
            utterances,
            splits: read_json(&layout.splits())?,
            record_hash: crate::artifacts::hash_file(&layout.prepare_record())?,
        })
    }

    pub fn get(&self, id: &str) -> anyhow::Result<&Utterance> {
        self.utterances
            .get(id)
            .ok_or_else(|| Error::Validation(format!("utterance {id:?} is not in the prepared dataset")).into())
    }

    pub fn split(&self, ids: &[String]) -> anyhow::Result<Vec<Utterance>> {
        ids.iter().map(|id| self.get(id).cloned()).collect()
    }

    pub fn segments(&self, utts: &[Utterance], cfg: &LoadedConfig) -> anyhow::Result<Vec<PhoneSegment>> {
        let mut out = Vec::new();
        for u in utts {
            out.extend(segment_utterance(u, &cfg.config.silence_labels)?);
        }
        Ok(out)
    }
}
