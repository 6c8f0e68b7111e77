//! Utterance-level training of the text encoder and acoustic model, and
//! training of the style predictor.

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{AcousticConfig, PredictorConfig};
use super::model::AcousticModel;
use super::predictor::StylePredictor;
use super::sequence::{StyleEmbeddingSequence, TextEmbeddingSequence};
use super::text::{phone_indices, TextEncoder};
use crate::corpus::{segment_utterance, PhoneInventory, SilenceLabels, Utterance};
use crate::error::{Error, Result};
use crate::nn::{Adam, Graph, Module, Param, Tensor, Var};
use crate::plcsd::losses::{clipped_log, clipped_log_complement};
use crate::plcsd::{Group, PlcsdModel, SegmentData};

/// Style sequence of an utterance: the frozen style encoder applied to each
/// aligned phone segment.
pub fn utterance_style_sequence(plcsd: &PlcsdModel, utt: &Utterance, silence: &SilenceLabels) -> Result<StyleEmbeddingSequence> {
    let segments = segment_utterance(utt, silence)?;
    let data: Vec<SegmentData> = segments.iter().map(|s| SegmentData::new(&s.mel, 0)).collect();
    let refs: Vec<&SegmentData> = data.iter().collect();
    let rows = plcsd.encode_batch(&refs, Group::StyleEncoder)?;
    StyleEmbeddingSequence::from_rows(&rows)
}

/// One utterance prepared for acoustic training.
#[derive(Clone, Debug, PartialEq)]
pub struct UtteranceData {
    pub id: String,
    pub phones: Vec<usize>,
    pub style: StyleEmbeddingSequence,
    /// Target mel, `T x n_mels`.
    pub mel: Tensor,
}

/// Prepared utterances plus those that could not be used, with the reason.
#[derive(Clone, Debug)]
pub struct PreparedUtterances {
    pub data: Vec<UtteranceData>,
    pub skipped: Vec<(String, String)>,
}

/// Computes each utterance's style sequence once with the frozen style
/// encoder. Utterances whose segmentation or phones are invalid are skipped
/// with a warning.
pub fn prepare_utterances(utterances: &[Utterance], plcsd: &PlcsdModel, inventory: &PhoneInventory, silence: &SilenceLabels) -> Result<PreparedUtterances> {
    let mut data = Vec::with_capacity(utterances.len());
    let mut skipped = Vec::new();
    for utt in utterances {
        let prepared = phone_indices(inventory, &utt.phone_sequence).and_then(|phones| {
            let style = utterance_style_sequence(plcsd, utt, silence)?;
            if style.len() != phones.len() {
                return Err(Error::Validation(format!("{} segments for {} phones", style.len(), phones.len())));
            }
            Ok(UtteranceData {
                id: utt.id.clone(),
                phones,
                style,
                mel: utt.mel.to_tensor(),
            })
        });
        match prepared {
            Ok(d) => data.push(d),
            Err(e @ Error::Numeric { .. }) => return Err(e),
            Err(e) => {
                warn!("skipping utterance {}: {e}", utt.id);
                skipped.push((utt.id.clone(), e.to_string()));
            }
        }
    }
    Ok(PreparedUtterances { data, skipped })
}

/// Guided-attention weights `1 - exp(-(n/m - t/T)^2 / (2 sigma^2))`, `T x m`.
pub fn guided_attention_weights(frames: usize, phones: usize, sigma: f64) -> Tensor {
    let mut w = Tensor::zeros(frames, phones);
    for t in 0..frames {
        for n in 0..phones {
            let d = n as f64 / phones as f64 - t as f64 / frames as f64;
            w.set(t, n, 1.0 - (-d * d / (2.0 * sigma * sigma)).exp());
        }
    }
    w
}

/// Graph nodes of the per-utterance training objective.
pub struct UtteranceObjective {
    /// `mse + gate + weight * attention`.
    pub loss: Var,
    /// Mean squared error over all frames and bands.
    pub mse: Var,
    /// Stop-gate cross-entropy averaged over frames.
    pub gate: Var,
    /// Guided-attention penalty averaged over the alignment matrix.
    pub attention: Var,
}

/// Objective for one utterance. `dropout_rng` enables prenet dropout at the
/// configured rate; without it the objective is deterministic.
pub fn utterance_objective(
    g: &mut Graph,
    text: &TextEncoder,
    acoustic: &AcousticModel,
    data: &UtteranceData,
    cfg: &AcousticConfig,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> UtteranceObjective {
    let t_len = data.mel.rows;
    let m = data.phones.len();
    let n_mels = data.mel.cols;
    let txt = text.forward(g, &data.phones);
    let style = g.constant(data.style.vectors.clone());
    let memory = g.concat_cols(&[txt, style]);
    let dropout = dropout_rng.filter(|_| cfg.prenet_dropout > 0.0).map(|r| (cfg.prenet_dropout, r));
    let steps = acoustic.teacher_forced(g, memory, &data.mel, dropout);

    let frames = g.concat_rows(&steps.frames);
    let target = g.constant(data.mel.clone());
    let d = g.sub(frames, target);
    let sq = g.mul(d, d);
    let sse = g.sum(sq);
    let mse = g.scale(sse, 1.0 / (t_len * n_mels) as f64);

    let gates = g.concat_rows(&steps.gates);
    let mut y = Tensor::zeros(t_len, 1);
    y.set(t_len - 1, 0, 1.0);
    let ny = y.map(|v| 1.0 - v);
    let (y, ny) = (g.constant(y), g.constant(ny));
    let lp = clipped_log(g, gates);
    let lq = clipped_log_complement(g, gates);
    let a = g.mul(lp, y);
    let b = g.mul(lq, ny);
    let ll = g.add(a, b);
    let ll = g.sum(ll);
    let gate = g.scale(ll, -1.0 / t_len as f64);

    let align = g.concat_rows(&steps.alignments);
    let w = g.constant(guided_attention_weights(t_len, m, cfg.guided_attention_sigma));
    let pen = g.mul(align, w);
    let pen = g.sum(pen);
    let attention = g.scale(pen, 1.0 / (t_len * m) as f64);

    let weighted = g.scale(attention, cfg.guided_attention_weight);
    let loss = g.add(mse, gate);
    let loss = g.add(loss, weighted);
    UtteranceObjective { loss, mse, gate, attention }
}

/// Mean losses of one batch or epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UtteranceLosses {
    pub mse: f64,
    pub gate: f64,
    pub attention: f64,
}

fn joint_params_mut<'a>(text: &'a mut TextEncoder, acoustic: &'a mut AcousticModel) -> Vec<&'a mut Param> {
    let mut v = text.params_mut();
    v.extend(acoustic.params_mut());
    v
}

/// Jointly optimizes the text encoder and the acoustic model.
#[derive(Clone, Debug)]
pub struct UtteranceTrainer {
    pub text: TextEncoder,
    pub acoustic: AcousticModel,
    pub config: AcousticConfig,
    pub optimizer: Adam,
    pub rng: ChaCha8Rng,
    pub epoch: usize,
}

impl UtteranceTrainer {
    pub fn new(config: AcousticConfig, n_phones: usize, style_dim: usize, n_mels: usize) -> Result<Self> {
        config.validate()?;
        if n_phones == 0 || style_dim == 0 || n_mels == 0 {
            return Err(Error::Validation("acoustic model needs phones, style dimensions and mel bands".into()));
        }
        let mut init = ChaCha8Rng::seed_from_u64(config.seed);
        let text = TextEncoder::new(n_phones, &config, &mut init);
        let acoustic = AcousticModel::new(config.text_dim + style_dim, n_mels, &config, &mut init);
        Ok(Self {
            optimizer: Adam::new(config.learning_rate).with_clip(config.clip_norm),
            rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed)),
            text,
            acoustic,
            config,
            epoch: 0,
        })
    }

    fn check(&self, d: &UtteranceData) -> Result<()> {
        if d.phones.is_empty() || d.phones.len() != d.style.len() {
            return Err(Error::Shape(format!("utterance {}: phone and style sequences differ in length", d.id)));
        }
        if d.style.dim() + self.text.dim() != self.acoustic.memory_dim() || d.mel.cols != self.acoustic.n_mels() || d.mel.rows == 0 {
            return Err(Error::Shape(format!("utterance {}: dimensions do not match the model", d.id)));
        }
        Ok(())
    }

    /// One optimizer step on the mean objective of `batch`.
    pub fn train_step(&mut self, batch: &[&UtteranceData]) -> Result<UtteranceLosses> {
        if batch.is_empty() {
            return Err(Error::Validation("empty batch".into()));
        }
        let mut g = Graph::new();
        let mut parts = Vec::with_capacity(batch.len());
        let mut sums = UtteranceLosses::default();
        for d in batch {
            self.check(d)?;
            let obj = utterance_objective(&mut g, &self.text, &self.acoustic, d, &self.config, Some(&mut self.rng));
            sums.mse += g.value(obj.mse).item();
            sums.gate += g.value(obj.gate).item();
            sums.attention += g.value(obj.attention).item();
            parts.push(obj.loss);
        }
        let mut total = parts[0];
        for &p in &parts[1..] {
            total = g.add(total, p);
        }
        let loss = g.scale(total, 1.0 / batch.len() as f64);
        if !g.value(loss).item().is_finite() {
            return Err(Error::numeric("acoustic training", "loss is not finite"));
        }
        let grads = g.backward(loss);
        let grads: Vec<Option<Tensor>> = self
            .text
            .params()
            .into_iter()
            .chain(self.acoustic.params())
            .map(|p| grads.param(p).cloned())
            .collect();
        drop(g);
        if grads.iter().flatten().any(|t| !t.is_finite()) {
            return Err(Error::numeric("acoustic training", "non-finite gradient"));
        }
        self.optimizer.step(joint_params_mut(&mut self.text, &mut self.acoustic), &grads);
        Ok(sums)
    }

    /// One shuffled pass; returns per-utterance mean losses.
    pub fn run_epoch(&mut self, data: &[UtteranceData]) -> Result<UtteranceLosses> {
        if data.is_empty() {
            return Err(Error::Validation("no training utterances".into()));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut sums = UtteranceLosses::default();
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&UtteranceData> = chunk.iter().map(|&i| &data[i]).collect();
            let l = self.train_step(&batch)?;
            sums.mse += l.mse;
            sums.gate += l.gate;
            sums.attention += l.attention;
        }
        self.epoch += 1;
        let n = data.len() as f64;
        Ok(UtteranceLosses {
            mse: sums.mse / n,
            gate: sums.gate / n,
            attention: sums.attention / n,
        })
    }

    /// Runs the remaining configured epochs.
    pub fn fit(&mut self, data: &[UtteranceData]) -> Result<Vec<UtteranceLosses>> {
        let mut history = Vec::new();
        while self.epoch < self.config.epochs {
            let l = self.run_epoch(data)?;
            info!("acoustic epoch {}: mse {:.4} gate {:.4} attention {:.4}", self.epoch, l.mse, l.gate, l.attention);
            history.push(l);
        }
        Ok(history)
    }
}

/// Trained text encoder and acoustic model with the training history.
#[derive(Clone, Debug)]
pub struct UtteranceTrainReport {
    pub text: TextEncoder,
    pub acoustic: AcousticModel,
    pub epochs: Vec<UtteranceLosses>,
    /// `(utterance id, reason)` for every utterance left out.
    pub skipped: Vec<(String, String)>,
}

/// Trains the text encoder and acoustic model on `utterances`, with style
/// sequences from the frozen PL-CSD style encoder.
pub fn train_utterance_level(
    utterances: &[Utterance],
    plcsd: &PlcsdModel,
    inventory: &PhoneInventory,
    silence: &SilenceLabels,
    config: &AcousticConfig,
) -> Result<UtteranceTrainReport> {
    let prepared = prepare_utterances(utterances, plcsd, inventory, silence)?;
    if prepared.data.is_empty() {
        return Err(Error::Validation(format!("all {} utterances were skipped", utterances.len())));
    }
    let mut trainer = UtteranceTrainer::new(config.clone(), inventory.len(), plcsd.style_dim(), plcsd.n_mels())?;
    let epochs = trainer.fit(&prepared.data)?;
    Ok(UtteranceTrainReport {
        text: trainer.text,
        acoustic: trainer.acoustic,
        epochs,
        skipped: prepared.skipped,
    })
}

/// Training example of the style predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorPair {
    pub input: TextEmbeddingSequence,
    pub target: StyleEmbeddingSequence,
}

/// One pair per utterance: its text embeddings and its style sequence.
pub fn build_predictor_pairs(
    utterances: &[Utterance],
    text: &TextEncoder,
    plcsd: &PlcsdModel,
    inventory: &PhoneInventory,
    silence: &SilenceLabels,
) -> Result<Vec<PredictorPair>> {
    utterances
        .iter()
        .map(|utt| {
            let input = text.encode_text(inventory, &utt.phone_sequence)?;
            let target = utterance_style_sequence(plcsd, utt, silence)?;
            if input.len() != target.len() {
                return Err(Error::Validation(format!("utterance {}: {} phones but {} segments", utt.id, input.len(), target.len())));
            }
            Ok(PredictorPair { input, target })
        })
        .collect()
}

/// Pairs from already prepared utterances.
pub fn pairs_from_prepared(data: &[UtteranceData], text: &TextEncoder) -> Result<Vec<PredictorPair>> {
    data.iter()
        .map(|d| {
            Ok(PredictorPair {
                input: text.encode_indices(&d.phones)?,
                target: d.style.clone(),
            })
        })
        .collect()
}

/// Mean squared error of the standardized prediction for one pair.
pub fn predictor_objective(g: &mut Graph, predictor: &StylePredictor, pair: &PredictorPair) -> Var {
    let x = g.constant(pair.input.vectors.clone());
    let y = predictor.forward_normalized(g, x);
    let target = g.constant(predictor.normalize_targets(&pair.target.vectors));
    let d = g.sub(y, target);
    let sq = g.mul(d, d);
    let s = g.sum(sq);
    g.scale(s, 1.0 / pair.target.vectors.len() as f64)
}

#[derive(Clone, Debug)]
pub struct PredictorReport {
    pub predictor: StylePredictor,
    /// Mean per-pair loss of each epoch, measured before each update.
    pub epoch_losses: Vec<f64>,
}

pub fn train_style_predictor(pairs: &[PredictorPair], config: &PredictorConfig) -> Result<PredictorReport> {
    config.validate()?;
    let first = pairs.first().ok_or_else(|| Error::Validation("no predictor training pairs".into()))?;
    let (text_dim, style_dim) = (first.input.dim(), first.target.dim());
    for p in pairs {
        if p.input.len() != p.target.len() || p.input.is_empty() {
            return Err(Error::Shape("predictor pair lengths differ".into()));
        }
        if p.input.dim() != text_dim || p.target.dim() != style_dim {
            return Err(Error::Shape("predictor pairs differ in dimension".into()));
        }
    }
    let mut init = ChaCha8Rng::seed_from_u64(config.seed);
    let mut predictor = StylePredictor::new(text_dim, style_dim, config, &mut init);
    let targets: Vec<&Tensor> = pairs.iter().map(|p| &p.target.vectors).collect();
    predictor.fit_normalization(&targets)?;
    let mut opt = Adam::new(config.learning_rate).with_clip(config.clip_norm);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut g = Graph::new();
            let losses: Vec<Var> = chunk.iter().map(|&i| predictor_objective(&mut g, &predictor, &pairs[i])).collect();
            let mut total = losses[0];
            for &l in &losses[1..] {
                total = g.add(total, l);
            }
            sum += g.value(total).item();
            let loss = g.scale(total, 1.0 / chunk.len() as f64);
            if !g.value(loss).item().is_finite() {
                return Err(Error::numeric("style predictor training", "loss is not finite"));
            }
            let grads = g.backward(loss);
            let grads: Vec<Option<Tensor>> = predictor.params().into_iter().map(|p| grads.param(p).cloned()).collect();
            drop(g);
            opt.step(predictor.params_mut(), &grads);
        }
        let mean = sum / pairs.len() as f64;
        info!("predictor epoch {}: loss {:.4}", epoch + 1, mean);
        epoch_losses.push(mean);
    }
    Ok(PredictorReport { predictor, epoch_losses })
}

/// Style sequence for `phones`, routed through the text encoder first.
pub fn predict_style<S: AsRef<str>>(phones: &[S], inventory: &PhoneInventory, text: &TextEncoder, predictor: &StylePredictor) -> Result<StyleEmbeddingSequence> {
    let t = text.encode_text(inventory, phones)?;
    predictor.predict(&t)
}
