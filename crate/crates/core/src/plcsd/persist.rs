//! Saving and restoring PL-CSD models and trainers.

use serde::{Deserialize, Serialize};

use super::config::PlcsdConfig;
use super::model::{Group, PlcsdModel};
use super::train::{Trainer, SUB_STEPS};
use crate::checkpoint::{Checkpoint, ParamGroup, RngState};
use crate::corpus::PhoneInventory;
use crate::error::{Error, Result};

pub const STAGE: &str = "plcsd";

/// Configuration echo stored in PL-CSD checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlcsdMeta {
    pub config: PlcsdConfig,
    pub inventory: PhoneInventory,
}

fn meta_json(config: &PlcsdConfig, inventory: &PhoneInventory) -> String {
    serde_json::to_string(&PlcsdMeta {
        config: config.clone(),
        inventory: inventory.clone(),
    })
    .expect("config serializes")
}

fn read_meta(ckpt: &Checkpoint) -> Result<PlcsdMeta> {
    if ckpt.stage != STAGE {
        return Err(Error::Format(format!("expected a {STAGE} checkpoint, found stage {}", ckpt.stage)));
    }
    serde_json::from_str(&ckpt.config_json).map_err(|e| Error::Format(format!("checkpoint config: {e}")))
}

impl PlcsdModel {
    pub fn to_checkpoint(&self, config: &PlcsdConfig, inventory: &PhoneInventory) -> Checkpoint {
        let mut c = Checkpoint::new(STAGE, meta_json(config, inventory));
        c.groups = Group::ALL.iter().map(|g| ParamGroup::from_module(g.name(), self.group(*g))).collect();
        c
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(Self, PlcsdMeta)> {
        let meta = read_meta(ckpt)?;
        let mut model = PlcsdModel::new(&meta.config, meta.inventory.len())?;
        for g in Group::ALL {
            ckpt.group(g.name())?.load_into(model.group_mut(g))?;
        }
        Ok((model, meta))
    }
}

impl Trainer {
    /// Model, optimizer moments, epoch counter and shuffling RNG state.
    pub fn to_checkpoint(&self, inventory: &PhoneInventory) -> Checkpoint {
        let mut c = self.model.to_checkpoint(&self.config, inventory);
        c.epoch = self.epoch as u64;
        c.rng = RngState::capture(&self.rng);
        for (i, opt) in self.optimizers.iter().enumerate() {
            c.push_optimizer(&format!("adam.{}", i + 1), opt);
        }
        c
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(Self, PhoneInventory)> {
        let (model, meta) = PlcsdModel::from_checkpoint(ckpt)?;
        let mut t = Trainer::from_parts(model, meta.config);
        t.epoch = ckpt.epoch as usize;
        t.rng = ckpt.rng.restore();
        for (i, objective) in SUB_STEPS.iter().enumerate() {
            let params = t.model.params_of(objective.trainable());
            ckpt.restore_optimizer(&format!("adam.{}", i + 1), &mut t.optimizers[i], &params)?;
        }
        Ok((t, meta.inventory))
    }
}
