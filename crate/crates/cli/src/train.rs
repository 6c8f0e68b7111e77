//! The three training stages. Each refuses to run without the checkpoint of
//! the stage before it.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};

use anyhow::Context;
use log::{info, warn};
use plcsd_core::acoustic::{
    acoustic_from_checkpoint, build_predictor_pairs, predictor_to_checkpoint, prepare_utterances, train_style_predictor, UtteranceTrainer,
};
use plcsd_core::corpus::PhoneInventory;
use plcsd_core::plcsd::{prepare_segments, EpochSummary, PlcsdModel, StepReport, TrainObserver, Trainer};
use plcsd_core::Error;
use serde_json::{json, Map, Value};

use crate::artifacts::{read_json, require_checkpoint, save_checkpoint, sidecar_path, Layout, Sidecar};
use crate::config::LoadedConfig;
use crate::data::Prepared;

fn open_log(path: &std::path::Path, append: bool) -> plcsd_core::Result<BufWriter<File>> {
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    Ok(BufWriter::new(file))
}

fn log_line(w: &mut BufWriter<File>, value: &Value) -> plcsd_core::Result<()> {
    writeln!(w, "{value}").and_then(|_| w.flush()).map_err(|e| Error::Io {
        path: "training log".into(),
        source: e,
    })
}

fn inventory_matches(expected: &PhoneInventory, found: &PhoneInventory, what: &str) -> plcsd_core::Result<()> {
    if expected != found {
        return Err(Error::Validation(format!("{what} was trained with a different phone inventory than the config lists")));
    }
    Ok(())
}

/// Loads the PL-CSD model later stages build on.
pub fn load_plcsd(cfg: &LoadedConfig) -> anyhow::Result<(PlcsdModel, std::path::PathBuf)> {
    let layout = Layout::new(cfg.output_dir());
    let path = layout.plcsd_for(cfg.config.checkpoints.downstream);
    let ckpt = require_checkpoint(&path, "train-plcsd")?;
    let (model, meta) = PlcsdModel::from_checkpoint(&ckpt)?;
    inventory_matches(&cfg.config.inventory()?, &meta.inventory, "the PL-CSD checkpoint")?;
    Ok((model, path))
}

/// Writes one JSON line per step and the last and best checkpoints after
/// every epoch.
struct PlcsdObserver<'a> {
    cfg: &'a LoadedConfig,
    layout: Layout,
    inventory: PhoneInventory,
    log: BufWriter<File>,
    epoch: usize,
    step: usize,
    best: f64,
    error: Option<plcsd_core::Error>,
}

impl PlcsdObserver<'_> {
    fn sidecar(&self, trainer: &Trainer, summary: &EpochSummary, kind: &str) -> plcsd_core::Result<Sidecar> {
        Ok(Sidecar::new("plcsd", self.cfg)
            .with_input("prepared", &self.layout.prepare_record())?
            .with_details(json!({
                "checkpoint": kind,
                "epoch": trainer.epoch,
                "mean_losses": losses_object(&summary.mean_losses),
                "validation_auto": summary.validation_auto,
            })))
    }
}

fn losses_object(losses: &[(String, f64)]) -> Value {
    Value::Object(losses.iter().map(|(n, v)| (n.clone(), json!(v))).collect::<Map<_, _>>())
}

impl TrainObserver for PlcsdObserver<'_> {
    fn on_step(&mut self, report: &StepReport) {
        self.step += 1;
        let line = json!({
            "epoch": self.epoch + 1,
            "step": self.step,
            "batch_size": report.batch_size,
            "losses": losses_object(&report.losses),
            "grad_norms": report.grad_norms,
        });
        if let Err(e) = log_line(&mut self.log, &line) {
            self.error.get_or_insert(e);
        }
    }

    fn on_epoch(&mut self, trainer: &Trainer, summary: &EpochSummary) -> plcsd_core::Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.epoch = summary.epoch;
        let ckpt = trainer.to_checkpoint(&self.inventory);
        save_checkpoint(&ckpt, &self.layout.plcsd_last(), self.sidecar(trainer, summary, "last")?)?;
        let monitored = summary.validation_auto.or(summary.loss("L_auto")).unwrap_or(f64::INFINITY);
        if self.cfg.config.checkpoints.keep_best && monitored < self.best {
            self.best = monitored;
            save_checkpoint(&ckpt, &self.layout.plcsd_best(), self.sidecar(trainer, summary, "best")?)?;
        }
        Ok(())
    }
}

/// Monitored loss recorded with the kept best checkpoint, if any.
fn previous_best(layout: &Layout) -> f64 {
    read_json::<Sidecar>(&sidecar_path(&layout.plcsd_best()))
        .ok()
        .and_then(|s| s.details["validation_auto"].as_f64().or(s.details["mean_losses"]["L_auto"].as_f64()))
        .unwrap_or(f64::INFINITY)
}

pub fn train_plcsd(cfg: &LoadedConfig, resume: bool, epochs: Option<usize>) -> anyhow::Result<()> {
    let layout = Layout::new(cfg.output_dir());
    let prepared = Prepared::load(cfg)?;
    let inventory = cfg.config.inventory()?;
    let train_utts = prepared.split(&prepared.splits.train)?;
    let valid_utts = prepared.split(&prepared.splits.valid)?;
    let train = prepare_segments(&prepared.segments(&train_utts, cfg)?, &inventory)?;
    let valid = prepare_segments(&prepared.segments(&valid_utts, cfg)?, &inventory)?;
    let mut trainer = if resume {
        let ckpt = require_checkpoint(&layout.plcsd_last(), "train-plcsd")?;
        let (t, inv) = Trainer::from_checkpoint(&ckpt)?;
        inventory_matches(&inventory, &inv, "the PL-CSD checkpoint")?;
        info!("train-plcsd: resuming after epoch {}", t.epoch);
        t
    } else {
        Trainer::new(cfg.config.plcsd.clone(), inventory.len())?
    };
    if let Some(n) = epochs {
        trainer.config.max_epochs = n;
    }
    info!("train-plcsd: {} training and {} validation segments", train.len(), valid.len());
    let mut observer = PlcsdObserver {
        cfg,
        layout: layout.clone(),
        inventory,
        log: open_log(&layout.plcsd_log(), resume)?,
        epoch: trainer.epoch,
        step: 0,
        best: if resume { previous_best(&layout) } else { f64::INFINITY },
        error: None,
    };
    let report = trainer.fit(&train, &valid, &mut observer).context("PL-CSD training failed")?;
    if report.epochs.is_empty() {
        warn!("train-plcsd: already trained for {} epochs; nothing to do", trainer.epoch);
    }
    info!(
        "train-plcsd: finished after {} epochs{}",
        trainer.epoch,
        if report.stopped_early { " (early stop)" } else { "" }
    );
    Ok(())
}

pub fn train_utterance(cfg: &LoadedConfig, resume: bool, epochs: Option<usize>) -> anyhow::Result<()> {
    let layout = Layout::new(cfg.output_dir());
    let (plcsd, plcsd_path) = load_plcsd(cfg)?;
    let prepared = Prepared::load(cfg)?;
    let inventory = cfg.config.inventory()?;
    let utts = prepared.split(&prepared.splits.train)?;
    let data = prepare_utterances(&utts, &plcsd, &inventory, &cfg.config.silence_labels)?;
    if data.data.is_empty() {
        return Err(Error::Validation("every training utterance was skipped".into()).into());
    }
    let mut trainer = if resume {
        let ckpt = require_checkpoint(&layout.utterance(), "train-utterance")?;
        let (t, inv) = UtteranceTrainer::from_checkpoint(&ckpt)?;
        inventory_matches(&inventory, &inv, "the utterance-level checkpoint")?;
        t
    } else {
        UtteranceTrainer::new(cfg.config.acoustic.clone(), inventory.len(), plcsd.style_dim(), plcsd.n_mels())?
    };
    if let Some(n) = epochs {
        trainer.config.epochs = n;
    }
    let mut log = open_log(&layout.utterance_log(), resume)?;
    while trainer.epoch < trainer.config.epochs {
        let l = trainer.run_epoch(&data.data).context("utterance-level training failed")?;
        info!("train-utterance: epoch {} mse {:.4} gate {:.4} attention {:.4}", trainer.epoch, l.mse, l.gate, l.attention);
        log_line(&mut log, &json!({"epoch": trainer.epoch, "mse": l.mse, "gate": l.gate, "attention": l.attention}))?;
        let sidecar = Sidecar::new("utterance", cfg)
            .with_input("prepared", &layout.prepare_record())?
            .with_input("plcsd", &plcsd_path)?
            .with_details(json!({"epoch": trainer.epoch, "losses": l, "skipped": data.skipped}));
        save_checkpoint(&trainer.to_checkpoint(&inventory), &layout.utterance(), sidecar)?;
    }
    Ok(())
}

pub fn train_predictor(cfg: &LoadedConfig, epochs: Option<usize>) -> anyhow::Result<()> {
    let layout = Layout::new(cfg.output_dir());
    let (plcsd, plcsd_path) = load_plcsd(cfg)?;
    let ckpt = require_checkpoint(&layout.utterance(), "train-utterance")?;
    let (text, _, meta) = acoustic_from_checkpoint(&ckpt)?;
    inventory_matches(&cfg.config.inventory()?, &meta.inventory, "the utterance-level checkpoint")?;
    let prepared = Prepared::load(cfg)?;
    let utts = prepared.split(&prepared.splits.train)?;
    let pairs = build_predictor_pairs(&utts, &text, &plcsd, &meta.inventory, &cfg.config.silence_labels)?;
    let mut pcfg = cfg.config.predictor.clone();
    if let Some(n) = epochs {
        pcfg.epochs = n;
    }
    let report = train_style_predictor(&pairs, &pcfg).context("style predictor training failed")?;
    let sidecar = Sidecar::new("predictor", cfg)
        .with_input("plcsd", &plcsd_path)?
        .with_input("utterance", &layout.utterance())?
        .with_details(json!({"pairs": pairs.len(), "epoch_losses": report.epoch_losses}));
    save_checkpoint(&predictor_to_checkpoint(&report.predictor, &pcfg), &layout.predictor(), sidecar)?;
    info!("train-predictor: trained on {} pairs", pairs.len());
    Ok(())
}
