//! The six-sub-step training iteration and the epoch loop around it.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::PlcsdConfig;
use super::losses::{auto_loss, build_objective, Objective, LOSS_NAMES};
use super::model::{Group, PlcsdModel, SegmentBatch, SegmentData};
use crate::corpus::{PhoneInventory, PhoneSegment};
use crate::error::{Error, Result};
use crate::nn::{Adam, Graph, Tensor};

/// Sub-steps of one training iteration, in execution order.
pub const SUB_STEPS: [Objective; 6] = [
    Objective::Auto,
    Objective::ContentClass,
    Objective::StyleDiscriminate,
    Objective::StyleGenerate,
    Objective::SegmentDiscriminate,
    Objective::SegmentGenerate,
];

/// Outcome of one training iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// The seven batch-summed losses, each measured before the update of the
    /// sub-step that minimizes it.
    pub losses: Vec<(String, f64)>,
    /// Pre-clipping gradient norm of each sub-step, in order.
    pub grad_norms: [f64; 6],
    /// Sub-step numbers (1 to 6) in the order they ran.
    pub order: Vec<usize>,
    pub batch_size: usize,
}

impl StepReport {
    pub fn loss(&self, name: &str) -> Option<f64> {
        self.losses.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn all_finite(&self) -> bool {
        self.losses.iter().all(|(_, v)| v.is_finite()) && self.grad_norms.iter().all(|v| v.is_finite())
    }
}

/// Hooks into the training loop. All methods default to no-ops.
pub trait TrainObserver {
    /// Called right before sub-step `index` (1 to 6) updates the model.
    fn before_substep(&mut self, _index: usize, _objective: Objective, _model: &PlcsdModel) {}
    /// Called right after sub-step `index` updated the model.
    fn after_substep(&mut self, _index: usize, _objective: Objective, _model: &PlcsdModel) {}
    fn on_step(&mut self, _report: &StepReport) {}
    /// Called after every epoch; an error aborts training.
    fn on_epoch(&mut self, _trainer: &Trainer, _summary: &EpochSummary) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// Per-epoch mean losses (per segment).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_losses: Vec<(String, f64)>,
    /// Mean reconstruction loss per held-out segment, if a validation set was given.
    pub validation_auto: Option<f64>,
}

impl EpochSummary {
    pub fn loss(&self, name: &str) -> Option<f64> {
        self.mean_losses.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub epochs: Vec<EpochSummary>,
    pub stopped_early: bool,
}

/// Owns the model, one optimizer per sub-step and the shuffling RNG.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: PlcsdModel,
    pub config: PlcsdConfig,
    pub optimizers: Vec<Adam>,
    pub rng: ChaCha8Rng,
    /// Number of completed epochs.
    pub epoch: usize,
}

impl Trainer {
    pub fn new(config: PlcsdConfig, n_phones: usize) -> Result<Self> {
        let model = PlcsdModel::new(&config, n_phones)?;
        Ok(Self::from_parts(model, config))
    }

    /// Wraps an existing model with fresh optimizers.
    pub fn from_parts(model: PlcsdModel, config: PlcsdConfig) -> Self {
        let optimizers = config
            .learning_rates
            .iter()
            .map(|&lr| Adam::new(lr).with_clip(config.clip_norm))
            .collect();
        // Separate stream from the one used for initialization.
        let rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
        Self {
            model,
            config,
            optimizers,
            rng,
            epoch: 0,
        }
    }

    /// One iteration: the six sub-steps in order, each updating only its
    /// trainable groups. On a non-finite loss or gradient the model and
    /// optimizers are restored and the offending sub-step is reported.
    pub fn train_step(&mut self, batch: &SegmentBatch, observer: &mut dyn TrainObserver) -> Result<StepReport> {
        if batch.size() == 0 {
            return Err(Error::Validation("empty batch".into()));
        }
        let snapshot = (self.model.clone(), self.optimizers.clone());
        let mut losses = Vec::with_capacity(7);
        let mut grad_norms = [0.0; 6];
        let mut order = Vec::with_capacity(6);
        for (i, &objective) in SUB_STEPS.iter().enumerate() {
            let index = i + 1;
            observer.before_substep(index, objective, &self.model);
            match self.substep(i, objective, batch) {
                Ok((parts, norm)) => {
                    losses.extend(parts.into_iter().map(|(n, v)| (n.to_string(), v)));
                    grad_norms[i] = norm;
                }
                Err(e) => {
                    self.model = snapshot.0;
                    self.optimizers = snapshot.1;
                    return Err(e);
                }
            }
            order.push(index);
            observer.after_substep(index, objective, &self.model);
        }
        let report = StepReport {
            losses,
            grad_norms,
            order,
            batch_size: batch.size(),
        };
        observer.on_step(&report);
        Ok(report)
    }

    fn substep(&mut self, i: usize, objective: Objective, batch: &SegmentBatch) -> Result<(Vec<(&'static str, f64)>, f64)> {
        let label = format!("sub-step {} ({})", i + 1, objective.name());
        let groups = objective.trainable();
        let (parts, grads, style_embeddings) = {
            let mut g = Graph::new();
            let built = build_objective(&mut g, &self.model, batch, objective, self.config.contrast_weight);
            let value = g.value(built.loss).item();
            if !value.is_finite() {
                return Err(Error::numeric(label, format!("loss is {value}")));
            }
            let grads = g.backward(built.loss);
            let grads: Vec<Option<Tensor>> = self
                .model
                .params_of(groups)
                .into_iter()
                .map(|p| grads.param(p).cloned())
                .collect();
            (built.parts, grads, built.style_embeddings)
        };
        if grads.iter().flatten().any(|t| !t.is_finite()) {
            return Err(Error::numeric(label, "non-finite gradient"));
        }
        let norm = self.optimizers[i].step(self.model.params_of_mut(groups), &grads);
        // The classifier's input statistics move only while it is trained.
        if objective == Objective::StyleDiscriminate {
            if let (Some(norm), Some(z)) = (&mut self.model.style_classifier.input_norm, &style_embeddings) {
                if z.rows >= 2 {
                    norm.update(z);
                }
            }
        }
        if !self.model.is_finite() {
            return Err(Error::numeric(label, "update produced non-finite parameters"));
        }
        Ok((parts, norm))
    }

    /// One pass over `data` in a freshly shuffled order.
    pub fn run_epoch(&mut self, data: &[SegmentData], observer: &mut dyn TrainObserver) -> Result<Vec<(String, f64)>> {
        if data.is_empty() {
            return Err(Error::Validation("no training segments".into()));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut sums = vec![0.0; LOSS_NAMES.len()];
        for chunk in order.chunks(self.config.batch_size) {
            let segs: Vec<&SegmentData> = chunk.iter().map(|&k| &data[k]).collect();
            let batch = SegmentBatch::new(&segs)?;
            let report = self.train_step(&batch, observer)?;
            for (s, name) in sums.iter_mut().zip(LOSS_NAMES) {
                *s += report.loss(name).unwrap_or(0.0);
            }
        }
        self.epoch += 1;
        let n = data.len() as f64;
        Ok(LOSS_NAMES.iter().zip(sums).map(|(name, s)| (name.to_string(), s / n)).collect())
    }

    /// Mean per-segment reconstruction loss.
    pub fn mean_auto_loss(&self, data: &[SegmentData]) -> Result<f64> {
        let mut total = 0.0;
        let refs: Vec<&SegmentData> = data.iter().collect();
        for chunk in refs.chunks(64) {
            total += auto_loss(&self.model, chunk)?;
        }
        Ok(total / data.len().max(1) as f64)
    }

    /// Trains until `max_epochs` or until validation reconstruction loss has
    /// not improved by the configured relative margin for `patience` epochs.
    /// Without validation data the training-epoch mean is monitored instead.
    pub fn fit(&mut self, train: &[SegmentData], valid: &[SegmentData], observer: &mut dyn TrainObserver) -> Result<FitReport> {
        if train.is_empty() {
            return Err(Error::Validation("no training segments".into()));
        }
        let mut epochs = Vec::new();
        let mut best = f64::INFINITY;
        let mut waited = 0;
        let mut stopped_early = false;
        while self.epoch < self.config.max_epochs {
            let mean_losses = self.run_epoch(train, observer)?;
            let validation_auto = if valid.is_empty() {
                None
            } else {
                Some(self.mean_auto_loss(valid)?)
            };
            let summary = EpochSummary {
                epoch: self.epoch,
                mean_losses,
                validation_auto,
            };
            info!(
                "epoch {}: L_auto {:.4} validation {:?}",
                summary.epoch,
                summary.loss("L_auto").unwrap_or(f64::NAN),
                summary.validation_auto
            );
            observer.on_epoch(self, &summary)?;
            let monitored = summary
                .validation_auto
                .unwrap_or_else(|| summary.loss("L_auto").unwrap_or(f64::INFINITY));
            epochs.push(summary);
            if monitored < best * (1.0 - self.config.early_stop_min_improvement) {
                best = monitored;
                waited = 0;
            } else {
                waited += 1;
                debug!("no improvement for {waited} epoch(s)");
                if waited >= self.config.early_stop_patience {
                    stopped_early = true;
                    break;
                }
            }
        }
        Ok(FitReport { epochs, stopped_early })
    }
}

/// Maps segments to model inputs, failing on labels outside the inventory.
pub fn prepare_segments(segments: &[PhoneSegment], inventory: &PhoneInventory) -> Result<Vec<SegmentData>> {
    segments
        .iter()
        .map(|s| {
            let phone = inventory
                .index_of(&s.phone)
                .map_err(|_| Error::UnknownPhone(format!("{} (utterance {})", s.phone, s.utterance_id)))?;
            if s.n_frames() == 0 {
                return Err(Error::Validation(format!("utterance {}: empty segment", s.utterance_id)));
            }
            Ok(SegmentData::new(&s.mel, phone))
        })
        .collect()
}

/// Trains a fresh model on `segments`, holding out a tenth of them (by the
/// configured seed) for early stopping.
pub fn train(segments: &[PhoneSegment], inventory: &PhoneInventory, config: &PlcsdConfig) -> Result<PlcsdModel> {
    if segments.is_empty() {
        return Err(Error::Validation("no training segments".into()));
    }
    let data = prepare_segments(segments, inventory)?;
    let (train, valid) = if data.len() >= 10 {
        crate::corpus::split_dataset(&data, 0.9, config.seed)?
    } else {
        (data, Vec::new())
    };
    let mut trainer = Trainer::new(config.clone(), inventory.len())?;
    trainer.fit(&train, &valid, &mut NoObserver)?;
    Ok(trainer.model)
}

/// Groups whose parameters must not change during sub-step `index` (1 to 6):
/// every group that the sub-step does not train.
pub fn untouched_groups(index: usize) -> Vec<Group> {
    let trains = SUB_STEPS[index - 1].trainable();
    Group::ALL.into_iter().filter(|g| !trains.contains(g)).collect()
}
