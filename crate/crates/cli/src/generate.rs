//! Generation, evaluation, embedding export and synthetic corpus creation.

use std::path::{Path, PathBuf};

use anyhow::Context;
use log::info;
use plcsd_core::acoustic::{acoustic_from_checkpoint, predictor_from_checkpoint, AcousticConfig, PredictorConfig};
use plcsd_core::corpus::{compute_mel, read_wav, save_alignment, save_manifest, write_wav, AlignmentFile, ManifestRecord, MelConfig, SyntheticConfig, SyntheticGenerator};
use plcsd_core::evalmetrics::{
    align_tracks, evaluate_pair, export_embeddings, extract_pitch, read_asr_manifest, sample_segments, write_asr_manifest, AsrManifestEntry, MetricReport,
};
use plcsd_core::plcsd::PlcsdConfig;
use plcsd_core::synth::{vocode, GenerationMode, GenerationRequest, Synthesizer};
use plcsd_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::artifacts::{create_dir, hash_file, read_json, require_checkpoint, sidecar_path, write_json, Layout, Sidecar};
use crate::config::{sha256_hex, LoadedConfig, RunConfig};
use crate::data::Prepared;
use crate::train::load_plcsd;

/// Whitespace-separated phone labels.
pub fn read_phones(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let phones: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    if phones.is_empty() {
        return Err(Error::Validation(format!("{} lists no phones", path.display())).into());
    }
    Ok(phones)
}

/// Paths of the files one generation wrote.
#[derive(Clone, Debug)]
pub struct GeneratedFiles {
    pub wav: PathBuf,
    pub mel: PathBuf,
    pub sidecar: PathBuf,
}

pub fn generate(cfg: &LoadedConfig, mode: GenerationMode, phones: Option<Vec<String>>, reference: Option<&str>, name: Option<String>) -> anyhow::Result<GeneratedFiles> {
    let layout = Layout::new(cfg.output_dir());
    let (plcsd, plcsd_path) = load_plcsd(cfg)?;
    let ckpt = require_checkpoint(&layout.utterance(), "train-utterance")?;
    let (text, acoustic, meta) = acoustic_from_checkpoint(&ckpt)?;
    let predictor = if mode == GenerationMode::Tts {
        let p = require_checkpoint(&layout.predictor(), "train-predictor")?;
        Some(predictor_from_checkpoint(&p)?.0)
    } else {
        None
    };
    let prepared = match reference {
        Some(_) => Some(Prepared::load(cfg)?),
        None => None,
    };
    let reference_utt = match (&prepared, reference) {
        (Some(p), Some(id)) => Some(p.get(id)?.clone()),
        _ => None,
    };
    let source_phones = match (mode, phones) {
        (GenerationMode::Reconstruct, _) => reference_utt.as_ref().map(|u| u.phone_sequence.clone()).unwrap_or_default(),
        (_, Some(p)) => p,
        (_, None) => Vec::new(),
    };
    let request = GenerationRequest {
        mode,
        source_phones: source_phones.clone(),
        reference: reference_utt,
    };
    let synth = Synthesizer {
        plcsd: &plcsd,
        text: &text,
        acoustic: &acoustic,
        predictor: predictor.as_ref(),
        inventory: &meta.inventory,
        silence: &cfg.config.silence_labels,
        max_frames: cfg.config.acoustic.max_decode_frames,
        gate_threshold: cfg.config.acoustic.gate_threshold,
        frame_shift: cfg.config.mel.frame_shift(),
    };
    let out = synth.generate(&request)?;
    let wav = vocode(&out.mel, &cfg.config.vocoder_config())?;

    let name = name.unwrap_or_else(|| match reference {
        Some(id) => format!("{}_{id}", mode.name()),
        None => format!("{}_{}", mode.name(), &sha256_hex(source_phones.join(" ").as_bytes())[..12]),
    });
    let dir = layout.generated();
    create_dir(&dir)?;
    let files = GeneratedFiles {
        wav: dir.join(format!("{name}.wav")),
        mel: dir.join(format!("{name}.mel")),
        sidecar: dir.join(format!("{name}.json")),
    };
    write_wav(&files.wav, &wav, cfg.config.mel.sample_rate)?;
    out.mel.save(&files.mel)?;
    let mut hashes = serde_json::Map::new();
    hashes.insert("plcsd".into(), json!(hash_file(&plcsd_path)?));
    hashes.insert("utterance".into(), json!(hash_file(&layout.utterance())?));
    if mode == GenerationMode::Tts {
        hashes.insert("predictor".into(), json!(hash_file(&layout.predictor())?));
    }
    let mut sidecar = Sidecar::new("generate", cfg).with_details(json!({
        "mode": mode.name(),
        "source_phones": source_phones,
        "reference_id": reference,
        "checkpoint_hashes": hashes,
        "n_frames": out.mel.n_frames(),
        "truncated": out.output.truncated,
        "mel_sha256": hash_file(&files.mel)?,
    }));
    sidecar.inputs = hashes.iter().map(|(k, v)| (k.clone(), v.as_str().unwrap_or_default().to_string())).collect();
    if let Some(p) = &prepared {
        sidecar.inputs.insert("prepared".into(), p.record_hash.clone());
    }
    sidecar.write(&files.sidecar)?;
    update_asr_manifest(&dir.join("asr_manifest.jsonl"), &name, &files.wav, &source_phones)?;
    info!(
        "{}: wrote {} ({} frames{})",
        mode.name(),
        files.wav.display(),
        out.mel.n_frames(),
        if out.output.truncated { ", truncated" } else { "" }
    );
    Ok(files)
}

/// Keeps one line per generated utterance for external recognition.
fn update_asr_manifest(path: &Path, id: &str, wav: &Path, phones: &[String]) -> plcsd_core::Result<()> {
    let mut entries = if path.exists() { read_asr_manifest(path)? } else { Vec::new() };
    entries.retain(|e| e.id != id);
    entries.push(AsrManifestEntry {
        id: id.to_string(),
        audio_path: wav.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        transcript: phones.join(" "),
    });
    write_asr_manifest(&entries, path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AudioPair {
    pub reference: PathBuf,
    pub synthesized: PathBuf,
}

#[derive(Clone, Debug, Serialize)]
struct PairReport {
    reference: PathBuf,
    synthesized: PathBuf,
    report: MetricReport,
}

fn evaluate_one(cfg: &LoadedConfig, pair: &AudioPair, csv: Option<&mut String>) -> anyhow::Result<MetricReport> {
    let sr = cfg.config.mel.sample_rate;
    let r = read_wav(&pair.reference, sr)?;
    let s = read_wav(&pair.synthesized, sr)?;
    let rm = compute_mel(&r, sr, &cfg.config.mel)?;
    let sm = compute_mel(&s, sr, &cfg.config.mel)?;
    let report = evaluate_pair(&r, &s, &rm, &sm, &cfg.config.pitch)?;
    if let Some(csv) = csv {
        let (rt, st) = align_tracks(&extract_pitch(&r, &cfg.config.pitch)?, &extract_pitch(&s, &cfg.config.pitch)?)?;
        for k in 0..rt.len() {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                pair.synthesized.display(),
                k,
                rt.f0()[k],
                st.f0()[k],
                u8::from(rt.voiced()[k]),
                u8::from(st.voiced()[k])
            ));
        }
    }
    Ok(report)
}

fn mean_report(reports: &[MetricReport]) -> MetricReport {
    let n = reports.len().max(1) as f64;
    let defined: Vec<&MetricReport> = reports.iter().filter(|r| r.gpe_defined).collect();
    MetricReport {
        vde: reports.iter().map(|r| r.vde).sum::<f64>() / n,
        gpe: defined.iter().map(|r| r.gpe).sum::<f64>() / defined.len().max(1) as f64,
        ffe: reports.iter().map(|r| r.ffe).sum::<f64>() / n,
        mcd: reports.iter().map(|r| r.mcd).sum::<f64>() / n,
        n_frames: reports.iter().map(|r| r.n_frames).sum(),
        gpe_defined: !defined.is_empty(),
    }
}

/// Metrics for one pair or a list of pairs; returns the JSON written.
pub fn evaluate(cfg: &LoadedConfig, pairs: &[AudioPair], single: bool, out: Option<&Path>, csv_path: Option<&Path>) -> anyhow::Result<String> {
    let mut csv = csv_path.map(|_| String::from("pair,frame,reference_f0,synthesized_f0,reference_voiced,synthesized_voiced\n"));
    let mut reports = Vec::with_capacity(pairs.len());
    for p in pairs {
        let r = evaluate_one(cfg, p, csv.as_mut()).with_context(|| format!("evaluating {}", p.synthesized.display()))?;
        reports.push(PairReport {
            reference: p.reference.clone(),
            synthesized: p.synthesized.clone(),
            report: r,
        });
    }
    let value = if single {
        serde_json::to_value(&reports[0].report)?
    } else {
        let all: Vec<MetricReport> = reports.iter().map(|r| r.report.clone()).collect();
        json!({"pairs": reports, "mean": mean_report(&all)})
    };
    let text = serde_json::to_string_pretty(&value)?;
    if let Some(path) = out {
        write_json(path, &value)?;
        let mut sidecar = Sidecar::new("evaluate", cfg);
        for (k, p) in pairs.iter().enumerate() {
            sidecar = sidecar.with_input(&format!("reference.{k}"), &p.reference)?.with_input(&format!("synthesized.{k}"), &p.synthesized)?;
        }
        sidecar.write(&sidecar_path(path))?;
    }
    if let (Some(path), Some(csv)) = (csv_path, csv) {
        std::fs::write(path, csv).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    Ok(text)
}

pub fn read_pairs(path: &Path) -> anyhow::Result<Vec<AudioPair>> {
    let pairs: Vec<AudioPair> = read_json(path)?;
    if pairs.is_empty() {
        return Err(Error::Validation(format!("{} lists no pairs", path.display())).into());
    }
    Ok(pairs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitChoice {
    Train,
    Valid,
    All,
}

pub fn export(cfg: &LoadedConfig, out: &Path, split: SplitChoice, phones: &[String], per_phone: usize, seed: u64) -> anyhow::Result<usize> {
    let (plcsd, plcsd_path) = load_plcsd(cfg)?;
    let prepared = Prepared::load(cfg)?;
    let utts = match split {
        SplitChoice::Train => prepared.split(&prepared.splits.train)?,
        SplitChoice::Valid => prepared.split(&prepared.splits.valid)?,
        SplitChoice::All => prepared.utterances.values().cloned().collect(),
    };
    let mut segments = prepared.segments(&utts, cfg)?;
    if !phones.is_empty() {
        let wanted: Vec<&str> = phones.iter().map(String::as_str).collect();
        segments = sample_segments(&segments, &wanted, per_phone, seed);
    }
    if segments.is_empty() {
        return Err(Error::Validation("no segments to export".into()).into());
    }
    if let Some(dir) = out.parent() {
        create_dir(dir)?;
    }
    let rows = export_embeddings(&plcsd, &segments, out)?;
    Sidecar::new("export-embeddings", cfg)
        .with_input("plcsd", &plcsd_path)?
        .with_details(json!({"prepared": prepared.record_hash, "segments": segments.len(), "rows": rows}))
        .write(&sidecar_path(out))?;
    info!("export-embeddings: wrote {rows} rows to {}", out.display());
    Ok(rows)
}

/// Settings of `make-synthetic`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRequest {
    pub utterances: usize,
    pub phones: usize,
    pub styles: usize,
    pub min_phones: usize,
    pub max_phones: usize,
    pub seed: u64,
}

/// A run config sized for the synthetic corpus.
pub fn synthetic_run_config(n_mels: usize, phones: Vec<String>) -> RunConfig {
    RunConfig {
        mel: MelConfig { n_mels, ..MelConfig::default() },
        phones: Some(phones),
        plcsd: PlcsdConfig {
            n_mels,
            content_dim: 8,
            style_dim: 4,
            encoder_width: 32,
            decoder_width: 32,
            classifier_hidden: 32,
            discriminator_width: 16,
            learning_rates: [1e-3, 1e-3, 1e-2, 1e-3, 1e-4, 1e-4],
            max_epochs: 50,
            seed: 1,
            ..PlcsdConfig::default()
        },
        acoustic: AcousticConfig {
            text_dim: 16,
            prenet_dim: 16,
            attention_dim: 16,
            decoder_width: 64,
            learning_rate: 2e-3,
            epochs: 125,
            max_decode_frames: 120,
            ..AcousticConfig::default()
        },
        predictor: PredictorConfig {
            model_dim: 16,
            blocks: 2,
            ffn_dim: 32,
            ..PredictorConfig::default()
        },
        ..RunConfig::default()
    }
}

/// Writes mel features, alignments, a manifest, the hidden style labels and
/// a starter config into `dir`.
pub fn make_synthetic(dir: &Path, req: &SyntheticRequest) -> anyhow::Result<()> {
    let generator = SyntheticGenerator::new(SyntheticConfig {
        n_phones: req.phones,
        n_styles: req.styles,
        seed: req.seed,
        ..SyntheticConfig::default()
    })?;
    let utts = generator.utterances(req.utterances, req.min_phones, req.max_phones, req.seed.wrapping_add(1))?;
    create_dir(&dir.join("mels"))?;
    create_dir(&dir.join("alignments"))?;
    let mut records = Vec::with_capacity(utts.len());
    let mut styles = serde_json::Map::new();
    for s in &utts {
        let u = &s.utterance;
        let mel_rel = format!("mels/{}.mel", u.id);
        let ali_rel = format!("alignments/{}.json", u.id);
        u.mel.save(dir.join(&mel_rel))?;
        save_alignment(
            &AlignmentFile {
                id: u.id.clone(),
                entries: u.alignment.clone(),
            },
            dir.join(&ali_rel),
        )?;
        styles.insert(u.id.clone(), json!(s.style));
        records.push(ManifestRecord {
            id: u.id.clone(),
            audio_path: None,
            mel_path: Some(mel_rel),
            phones: u.phone_sequence.clone(),
            alignment_path: ali_rel,
        });
    }
    save_manifest(&records, dir.join("manifest.json"))?;
    write_json(&dir.join("styles.json"), &styles)?;
    write_json(&dir.join("synthetic.json"), req)?;
    let config = synthetic_run_config(generator.config().n_mels, generator.inventory().phones().to_vec());
    write_json(&dir.join("config.json"), &config)?;
    info!("make-synthetic: wrote {} utterances to {}", records.len(), dir.display());
    Ok(())
}
