//! Output layout, file hashing and the JSON sidecars that record provenance.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plcsd_core::checkpoint::Checkpoint;
use plcsd_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{sha256_hex, CheckpointChoice, LoadedConfig};

/// Paths of every artifact below the output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: PathBuf) -> Self {
        Self { root }
    }

    pub fn prepared(&self) -> PathBuf {
        self.root.join("prepared")
    }
    pub fn prepared_manifest(&self) -> PathBuf {
        self.prepared().join("manifest.json")
    }
    pub fn splits(&self) -> PathBuf {
        self.prepared().join("splits.json")
    }
    pub fn rejects(&self) -> PathBuf {
        self.prepared().join("rejects.json")
    }
    pub fn prepare_record(&self) -> PathBuf {
        self.prepared().join("prepare.json")
    }
    pub fn plcsd_last(&self) -> PathBuf {
        self.root.join("plcsd.ckpt")
    }
    pub fn plcsd_best(&self) -> PathBuf {
        self.root.join("plcsd_best.ckpt")
    }
    pub fn plcsd_for(&self, choice: CheckpointChoice) -> PathBuf {
        match choice {
            CheckpointChoice::Last => self.plcsd_last(),
            CheckpointChoice::Best => self.plcsd_best(),
        }
    }
    pub fn plcsd_log(&self) -> PathBuf {
        self.root.join("plcsd_log.jsonl")
    }
    pub fn utterance(&self) -> PathBuf {
        self.root.join("utterance.ckpt")
    }
    pub fn utterance_log(&self) -> PathBuf {
        self.root.join("utterance_log.jsonl")
    }
    pub fn predictor(&self) -> PathBuf {
        self.root.join("predictor.ckpt")
    }
    pub fn generated(&self) -> PathBuf {
        self.root.join("generated")
    }
}

/// Sidecar path of an artifact: `name.ext` becomes `name.ext.json`.
pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn hash_file(path: &Path) -> plcsd_core::Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(sha256_hex(&bytes))
}

/// Provenance written next to (or, for directories, inside) each artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub stage: String,
    pub config_hash: String,
    /// SHA-256 of the files this artifact was derived from.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    /// Stage-specific details.
    #[serde(default)]
    pub details: Value,
    pub config: Value,
}

impl Sidecar {
    pub fn new(stage: &str, cfg: &LoadedConfig) -> Self {
        Self {
            stage: stage.to_string(),
            config_hash: cfg.config.hash(),
            inputs: BTreeMap::new(),
            details: Value::Null,
            config: serde_json::to_value(&cfg.config).expect("config serializes"),
        }
    }

    pub fn with_input(mut self, name: &str, path: &Path) -> plcsd_core::Result<Self> {
        self.inputs.insert(name.to_string(), hash_file(path)?);
        Ok(self)
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn write(&self, path: &Path) -> plcsd_core::Result<()> {
        write_json(path, self)
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> plcsd_core::Result<()> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> plcsd_core::Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: path.display().to_string(),
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

pub fn create_dir(dir: &Path) -> plcsd_core::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

/// Saves a checkpoint and its sidecar.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path, sidecar: Sidecar) -> plcsd_core::Result<()> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    ckpt.save(path)?;
    sidecar.write(&sidecar_path(path))
}

/// Loads the checkpoint a stage depends on, or reports the missing stage.
pub fn require_checkpoint(path: &Path, producer: &str) -> plcsd_core::Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::MissingPrerequisite(format!(
            "{} not found; run `{producer}` first",
            path.display()
        )));
    }
    Checkpoint::load(path)
}
