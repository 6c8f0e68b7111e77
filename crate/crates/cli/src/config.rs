//! The JSON run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use anyhow::Context;
use plcsd_core::acoustic::{AcousticConfig, PredictorConfig};
use plcsd_core::corpus::{MelConfig, PhoneInventory, SilenceLabels};
use plcsd_core::evalmetrics::PitchConfig;
use plcsd_core::plcsd::PlcsdConfig;
use plcsd_core::synth::VocoderConfig;
use plcsd_core::Error;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Which PL-CSD checkpoint later stages build on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointChoice {
    #[default]
    Last,
    Best,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckpointPolicy {
    /// Also keep the PL-CSD checkpoint with the best validation loss.
    pub keep_best: bool,
    pub downstream: CheckpointChoice,
}

impl Default for CheckpointPolicy {
    fn default() -> Self {
        Self {
            keep_best: true,
            downstream: CheckpointChoice::Last,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocoderSettings {
    pub iterations: usize,
    pub regularization: f64,
}

impl Default for VocoderSettings {
    fn default() -> Self {
        let d = VocoderConfig::default();
        Self {
            iterations: d.iterations,
            regularization: d.regularization,
        }
    }
}

/// Everything a pipeline run needs. Relative paths resolve against the
/// directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    pub mel: MelConfig,
    pub silence_labels: SilenceLabels,
    /// Phone inventory; the 39 ARPABET phones when absent.
    pub phones: Option<Vec<String>>,
    pub train_fraction: f64,
    /// Seeds the train/validation split.
    pub seed: u64,
    /// Recorded for provenance. Every computation is single-threaded with a
    /// fixed reduction order, so runs are reproducible either way.
    pub deterministic: bool,
    pub plcsd: PlcsdConfig,
    pub acoustic: AcousticConfig,
    pub predictor: PredictorConfig,
    pub vocoder: VocoderSettings,
    pub pitch: PitchConfig,
    pub checkpoints: CheckpointPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("manifest.json"),
            output_dir: PathBuf::from("run"),
            mel: MelConfig::default(),
            silence_labels: SilenceLabels::default(),
            phones: None,
            train_fraction: 0.9,
            seed: 0,
            deterministic: true,
            plcsd: PlcsdConfig::default(),
            acoustic: AcousticConfig::default(),
            predictor: PredictorConfig::default(),
            vocoder: VocoderSettings::default(),
            pitch: PitchConfig::default(),
            checkpoints: CheckpointPolicy::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> plcsd_core::Result<()> {
        self.mel.validate()?;
        self.plcsd.validate()?;
        self.acoustic.validate()?;
        self.predictor.validate()?;
        self.pitch.validate()?;
        if self.plcsd.n_mels != self.mel.n_mels {
            return Err(Error::Validation(format!(
                "plcsd.n_mels is {} but mel.n_mels is {}",
                self.plcsd.n_mels, self.mel.n_mels
            )));
        }
        if self.pitch.sample_rate != self.mel.sample_rate {
            return Err(Error::Validation("pitch.sample_rate must equal mel.sample_rate".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Validation("train_fraction must lie in (0, 1)".into()));
        }
        if self.vocoder.iterations == 0 || !(self.vocoder.regularization > 0.0) {
            return Err(Error::Validation("vocoder needs at least one iteration and a positive regularization".into()));
        }
        self.inventory()?;
        Ok(())
    }

    pub fn inventory(&self) -> plcsd_core::Result<PhoneInventory> {
        match &self.phones {
            Some(p) => PhoneInventory::new(p.iter().cloned()),
            None => Ok(PhoneInventory::arpabet()),
        }
    }

    pub fn vocoder_config(&self) -> VocoderConfig {
        VocoderConfig {
            mel: self.mel.clone(),
            iterations: self.vocoder.iterations,
            regularization: self.vocoder.regularization,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// A validated config together with the directory its paths are relative to.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            file: path.display().to_string(),
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        config.validate().with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }
}
