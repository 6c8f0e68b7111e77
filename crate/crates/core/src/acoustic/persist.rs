//! Checkpoints of the utterance-level stage and of the style predictor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{AcousticConfig, PredictorConfig};
use super::model::AcousticModel;
use super::predictor::StylePredictor;
use super::text::TextEncoder;
use super::train::UtteranceTrainer;
use crate::checkpoint::{Checkpoint, ParamGroup, RngState};
use crate::corpus::PhoneInventory;
use crate::error::{Error, Result};
use crate::nn::{Module, Param};

pub const ACOUSTIC_STAGE: &str = "acoustic";
pub const PREDICTOR_STAGE: &str = "predictor";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcousticMeta {
    pub config: AcousticConfig,
    pub inventory: PhoneInventory,
    pub style_dim: usize,
    pub n_mels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorMeta {
    pub config: PredictorConfig,
    pub text_dim: usize,
    pub style_dim: usize,
}

fn read_meta<T: for<'de> Deserialize<'de>>(ckpt: &Checkpoint, stage: &str) -> Result<T> {
    if ckpt.stage != stage {
        return Err(Error::Format(format!("expected a {stage} checkpoint, found stage {}", ckpt.stage)));
    }
    serde_json::from_str(&ckpt.config_json).map_err(|e| Error::Format(format!("checkpoint config: {e}")))
}

/// Text encoder and acoustic model as stored in one checkpoint.
pub fn acoustic_to_checkpoint(text: &TextEncoder, acoustic: &AcousticModel, meta: &AcousticMeta) -> Checkpoint {
    let mut c = Checkpoint::new(ACOUSTIC_STAGE, serde_json::to_string(meta).expect("config serializes"));
    c.groups = vec![ParamGroup::from_module("text_encoder", text), ParamGroup::from_module("acoustic_model", acoustic)];
    c
}

pub fn acoustic_from_checkpoint(ckpt: &Checkpoint) -> Result<(TextEncoder, AcousticModel, AcousticMeta)> {
    let meta: AcousticMeta = read_meta(ckpt, ACOUSTIC_STAGE)?;
    let mut t = UtteranceTrainer::new(meta.config.clone(), meta.inventory.len(), meta.style_dim, meta.n_mels)?;
    ckpt.group("text_encoder")?.load_into(&mut t.text)?;
    ckpt.group("acoustic_model")?.load_into(&mut t.acoustic)?;
    Ok((t.text, t.acoustic, meta))
}

impl UtteranceTrainer {
    /// Models plus optimizer moments, epoch counter and shuffling state.
    pub fn to_checkpoint(&self, inventory: &PhoneInventory) -> Checkpoint {
        let meta = AcousticMeta {
            config: self.config.clone(),
            inventory: inventory.clone(),
            style_dim: self.acoustic.memory_dim() - self.text.dim(),
            n_mels: self.acoustic.n_mels(),
        };
        let mut c = acoustic_to_checkpoint(&self.text, &self.acoustic, &meta);
        c.epoch = self.epoch as u64;
        c.rng = RngState::capture(&self.rng);
        c.push_optimizer("adam", &self.optimizer);
        c
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(Self, PhoneInventory)> {
        let (text, acoustic, meta) = acoustic_from_checkpoint(ckpt)?;
        let mut t = UtteranceTrainer::new(meta.config, meta.inventory.len(), meta.style_dim, meta.n_mels)?;
        t.text = text;
        t.acoustic = acoustic;
        t.epoch = ckpt.epoch as usize;
        t.rng = ckpt.rng.restore();
        let params: Vec<&Param> = t.text.params().into_iter().chain(t.acoustic.params()).collect();
        let mut opt = t.optimizer.clone();
        ckpt.restore_optimizer("adam", &mut opt, &params)?;
        t.optimizer = opt;
        Ok((t, meta.inventory))
    }
}

pub fn predictor_to_checkpoint(predictor: &StylePredictor, config: &PredictorConfig) -> Checkpoint {
    let meta = PredictorMeta {
        config: config.clone(),
        text_dim: predictor.text_dim(),
        style_dim: predictor.style_dim(),
    };
    let mut c = Checkpoint::new(PREDICTOR_STAGE, serde_json::to_string(&meta).expect("config serializes"));
    c.groups = vec![ParamGroup::from_module("style_predictor", predictor)];
    c
}

pub fn predictor_from_checkpoint(ckpt: &Checkpoint) -> Result<(StylePredictor, PredictorMeta)> {
    let meta: PredictorMeta = read_meta(ckpt, PREDICTOR_STAGE)?;
    meta.config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(meta.config.seed);
    let mut p = StylePredictor::new(meta.text_dim, meta.style_dim, &meta.config, &mut rng);
    ckpt.group("style_predictor")?.load_into(&mut p)?;
    Ok((p, meta))
}
