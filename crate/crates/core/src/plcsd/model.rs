//! The six PL-CSD components and their forward passes.

use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::PlcsdConfig;
use crate::corpus::MelSpectrogram;
use crate::error::{Error, Result};
use crate::nn::{Graph, Linear, LstmCell, Module, Param, Tensor, Var};

/// A segment ready for the model: `n x n_mels` frames plus its phone index.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentData {
    pub frames: Tensor,
    pub phone: usize,
}

impl SegmentData {
    pub fn new(mel: &MelSpectrogram, phone: usize) -> Self {
        Self {
            frames: mel.to_tensor(),
            phone,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.frames.rows
    }
}

/// Time-major, zero-padded view of a batch of variable-length segments.
#[derive(Clone, Debug)]
pub struct SegmentBatch {
    /// `steps[t]` is `B x n_mels`; rows past a segment's end are zero.
    pub steps: Vec<Tensor>,
    /// `masks[t][b] = 1` while `t < lengths[b]`.
    pub masks: Vec<Rc<Tensor>>,
    pub lengths: Vec<usize>,
    pub phones: Vec<usize>,
    pub n_mels: usize,
}

impl SegmentBatch {
    pub fn new(segments: &[&SegmentData]) -> Result<Self> {
        let first = segments.first().ok_or_else(|| Error::Validation("empty batch".into()))?;
        let n_mels = first.frames.cols;
        let b = segments.len();
        let t_max = segments.iter().map(|s| s.n_frames()).max().unwrap_or(0);
        for s in segments {
            if s.n_frames() == 0 {
                return Err(Error::Validation("segment has no frames".into()));
            }
            if s.frames.cols != n_mels {
                return Err(Error::Shape(format!("segment has {} bands, batch has {n_mels}", s.frames.cols)));
            }
            if !s.frames.is_finite() {
                return Err(Error::numeric("segment input", "non-finite mel value"));
            }
        }
        let mut steps = Vec::with_capacity(t_max);
        let mut masks = Vec::with_capacity(t_max);
        for t in 0..t_max {
            let mut x = Tensor::zeros(b, n_mels);
            let mut m = Tensor::zeros(b, 1);
            for (i, s) in segments.iter().enumerate() {
                if t < s.n_frames() {
                    x.row_mut(i).copy_from_slice(s.frames.row(t));
                    m.data[i] = 1.0;
                }
            }
            steps.push(x);
            masks.push(Rc::new(m));
        }
        Ok(Self {
            steps,
            masks,
            lengths: segments.iter().map(|s| s.n_frames()).collect(),
            phones: segments.iter().map(|s| s.phone).collect(),
            n_mels,
        })
    }

    pub fn size(&self) -> usize {
        self.lengths.len()
    }

    pub fn max_len(&self) -> usize {
        self.steps.len()
    }

    /// Per-frame weights `mask / n_k` (`B x 1`) used for per-frame averaging.
    pub fn frame_weights(&self, t: usize) -> Tensor {
        let data = self
            .lengths
            .iter()
            .zip(&self.masks[t].data)
            .map(|(&n, &m)| m / n as f64)
            .collect();
        Tensor::from_vec(self.size(), 1, data)
    }

    /// Gate targets at step `t`: 1 on each segment's final frame.
    pub fn gate_targets(&self, t: usize) -> Tensor {
        let data = self.lengths.iter().map(|&n| if t + 1 == n { 1.0 } else { 0.0 }).collect();
        Tensor::from_vec(self.size(), 1, data)
    }
}

/// Bidirectional LSTM whose final cell states are projected to an embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceEncoder {
    pub forward: LstmCell,
    pub backward: LstmCell,
    pub proj: Linear,
}

impl SequenceEncoder {
    pub fn new(name: &str, n_mels: usize, width: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let half = width / 2;
        Self {
            forward: LstmCell::new(&format!("{name}.forward"), n_mels, half, rng),
            backward: LstmCell::new(&format!("{name}.backward"), n_mels, half, rng),
            proj: Linear::new(&format!("{name}.proj"), width, dim, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.proj.output_dim()
    }

    /// `B x dim` embeddings for the batch.
    pub fn encode(&self, g: &mut Graph, batch: &SegmentBatch) -> Var {
        let b = batch.size();
        let inputs: Vec<Var> = batch.steps.iter().map(|x| g.constant(x.clone())).collect();
        let mut fwd = self.forward.zero_state(g, b);
        for (x, m) in inputs.iter().zip(&batch.masks) {
            fwd = self.forward.masked_step(g, *x, fwd, m);
        }
        let mut bwd = self.backward.zero_state(g, b);
        for (x, m) in inputs.iter().zip(&batch.masks).rev() {
            bwd = self.backward.masked_step(g, *x, bwd, m);
        }
        let cells = g.concat_cols(&[fwd.c, bwd.c]);
        self.proj.forward(g, cells)
    }
}

impl Module for SequenceEncoder {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.forward.params();
        v.extend(self.backward.params());
        v.extend(self.proj.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.forward.params_mut();
        v.extend(self.backward.params_mut());
        v.extend(self.proj.params_mut());
        v
    }
}

/// Per-step decoder outputs.
pub struct DecodedSteps {
    pub frames: Vec<Var>,
    /// Stop probabilities, each `B x 1`.
    pub gates: Vec<Var>,
}

/// Result of autoregressive decoding without a teacher.
#[derive(Clone, Debug, PartialEq)]
pub struct FreeRunOutput {
    pub frames: Tensor,
    pub gates: Vec<f64>,
    /// `true` when decoding hit the frame limit before the gate fired.
    pub truncated: bool,
}

/// Autoregressive segment decoder: LSTM over `[previous frame, z_c, z_s]`
/// with a frame head and a stop-gate head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentDecoder {
    pub cell: LstmCell,
    pub frame_head: Linear,
    pub gate_head: Linear,
}

impl SegmentDecoder {
    pub fn new(n_mels: usize, content_dim: usize, style_dim: usize, width: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            cell: LstmCell::new("decoder.cell", n_mels + content_dim + style_dim, width, rng),
            frame_head: Linear::new("decoder.frame_head", width, n_mels, rng),
            gate_head: Linear::new("decoder.gate_head", width, 1, rng),
        }
    }

    pub fn n_mels(&self) -> usize {
        self.frame_head.output_dim()
    }

    fn step(&self, g: &mut Graph, prev: Var, cond: Var, state: crate::nn::LstmState) -> (Var, Var, crate::nn::LstmState) {
        let input = g.concat_cols(&[prev, cond]);
        let state = self.cell.step(g, input, state);
        let frame = self.frame_head.forward(g, state.h);
        let logit = self.gate_head.forward(g, state.h);
        let gate = g.sigmoid(logit);
        (frame, gate, state)
    }

    /// Teacher-forced decoding: step `t` sees ground-truth frame `t-1`
    /// (zeros at `t = 0`) and predicts frame `t`.
    pub fn teacher_forced(&self, g: &mut Graph, content: Var, style: Var, batch: &SegmentBatch) -> DecodedSteps {
        let b = batch.size();
        let cond = g.concat_cols(&[content, style]);
        let mut state = self.cell.zero_state(g, b);
        let mut prev = g.constant(Tensor::zeros(b, batch.n_mels));
        let mut frames = Vec::with_capacity(batch.max_len());
        let mut gates = Vec::with_capacity(batch.max_len());
        for t in 0..batch.max_len() {
            let (frame, gate, s) = self.step(g, prev, cond, state);
            state = s;
            frames.push(frame);
            gates.push(gate);
            prev = g.constant(batch.steps[t].clone());
        }
        DecodedSteps { frames, gates }
    }

    /// Free-running decoding of one segment from a zero initial frame.
    pub fn free_run(&self, content: &[f64], style: &[f64], max_frames: usize, gate_threshold: f64) -> FreeRunOutput {
        let mut g = Graph::new();
        g.set_grad_enabled(false);
        let n_mels = self.n_mels();
        let mut cond_data = content.to_vec();
        cond_data.extend_from_slice(style);
        let cond = g.constant(Tensor::row_vector(&cond_data));
        let mut state = self.cell.zero_state(&mut g, 1);
        let mut prev = g.constant(Tensor::zeros(1, n_mels));
        let mut rows = Vec::new();
        let mut gates = Vec::new();
        let mut truncated = true;
        for _ in 0..max_frames {
            let (frame, gate, s) = self.step(&mut g, prev, cond, state);
            state = s;
            rows.push(g.value(frame).data.clone());
            let p = g.value(gate).item();
            gates.push(p);
            prev = frame;
            if p >= gate_threshold {
                truncated = false;
                break;
            }
        }
        FreeRunOutput {
            frames: Tensor::from_rows(&rows),
            gates,
            truncated,
        }
    }
}

impl Module for SegmentDecoder {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.cell.params();
        v.extend(self.frame_head.params());
        v.extend(self.gate_head.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.cell.params_mut();
        v.extend(self.frame_head.params_mut());
        v.extend(self.gate_head.params_mut());
        v
    }
}

/// Two-layer perceptron producing a phone posterior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhoneClassifier {
    pub hidden: Linear,
    pub output: Linear,
    /// Optional input standardization (see [`InputNorm`]).
    #[serde(default)]
    pub input_norm: Option<InputNorm>,
}

/// Standardizes classifier inputs per dimension. Training batches use their
/// own statistics, so the classifier sees the embedding's shape regardless of
/// its scale; single embeddings use running averages of those statistics.
/// The averages are stored as parameters for checkpointing but never receive
/// gradients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub mean: Param,
    pub var: Param,
}

/// Weight of the newest batch in the running statistics.
pub const NORM_MOMENTUM: f64 = 0.1;
const NORM_EPS: f64 = 1e-5;

impl InputNorm {
    pub fn new(name: &str, dim: usize) -> Self {
        Self {
            mean: Param::new(format!("{name}.running_mean"), Tensor::zeros(1, dim)),
            var: Param::new(format!("{name}.running_var"), Tensor::from_vec(1, dim, vec![1.0; dim])),
        }
    }

    fn apply_running(&self, g: &mut Graph, z: Var) -> Var {
        let shift = Tensor::from_vec(1, self.mean.value.cols, self.mean.value.data.iter().map(|m| -m).collect());
        let scale = Tensor::from_vec(
            1,
            self.var.value.cols,
            self.var.value.data.iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect(),
        );
        let shift = g.constant(shift);
        let scale = g.constant(scale);
        let centred = g.add_row(z, shift);
        g.mul_row(centred, scale)
    }

    fn apply_batch(&self, g: &mut Graph, z: Var) -> Var {
        let t = g.transpose(z);
        let n = g.layer_norm(t, NORM_EPS);
        g.transpose(n)
    }

    /// Folds the (biased) statistics of a `B x dim` batch into the averages.
    pub fn update(&mut self, batch: &Tensor) {
        let b = batch.rows as f64;
        for c in 0..batch.cols {
            let mean = (0..batch.rows).map(|r| batch.row(r)[c]).sum::<f64>() / b;
            let var = (0..batch.rows).map(|r| (batch.row(r)[c] - mean).powi(2)).sum::<f64>() / b;
            let m = &mut self.mean.value.data[c];
            *m = ((1.0 - NORM_MOMENTUM) * *m + NORM_MOMENTUM * mean) as f32 as f64;
            let v = &mut self.var.value.data[c];
            *v = ((1.0 - NORM_MOMENTUM) * *v + NORM_MOMENTUM * var) as f32 as f64;
        }
    }
}

impl PhoneClassifier {
    pub fn new(name: &str, input: usize, hidden: usize, n_phones: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            hidden: Linear::new(&format!("{name}.hidden"), input, hidden, rng),
            output: Linear::new(&format!("{name}.output"), hidden, n_phones, rng),
            input_norm: None,
        }
    }

    pub fn with_input_norm(mut self, name: &str) -> Self {
        self.input_norm = Some(InputNorm::new(name, self.input_dim()));
        self
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.input_dim()
    }

    pub fn n_phones(&self) -> usize {
        self.output.output_dim()
    }

    /// `B x N_w` posteriors, standardizing with the running statistics.
    pub fn posterior(&self, g: &mut Graph, z: Var) -> Var {
        let z = match &self.input_norm {
            Some(norm) => norm.apply_running(g, z),
            None => z,
        };
        self.head(g, z)
    }

    /// Training-mode posteriors: batches of two or more are standardized
    /// with their own statistics.
    pub fn posterior_batch(&self, g: &mut Graph, z: Var) -> Var {
        match &self.input_norm {
            Some(norm) if g.shape(z).0 >= 2 => {
                let z = norm.apply_batch(g, z);
                self.head(g, z)
            }
            _ => self.posterior(g, z),
        }
    }

    fn head(&self, g: &mut Graph, z: Var) -> Var {
        let h = self.hidden.forward(g, z);
        let h = g.tanh(h);
        let logits = self.output.forward(g, h);
        g.softmax_rows(logits)
    }
}

impl Module for PhoneClassifier {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.hidden.params();
        v.extend(self.output.params());
        if let Some(n) = &self.input_norm {
            v.extend([&n.mean, &n.var]);
        }
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.hidden.params_mut();
        v.extend(self.output.params_mut());
        if let Some(n) = &mut self.input_norm {
            v.extend([&mut n.mean, &mut n.var]);
        }
        v
    }
}

/// Natural-versus-reconstructed discriminator over a segment's frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentDiscriminator {
    pub cell: LstmCell,
    pub head: Linear,
}

impl SegmentDiscriminator {
    pub fn new(n_mels: usize, width: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            cell: LstmCell::new("segment_classifier.cell", n_mels, width, rng),
            head: Linear::new("segment_classifier.head", width, 1, rng),
        }
    }

    /// `B x 1` probabilities that each (masked) frame sequence is natural.
    pub fn probability(&self, g: &mut Graph, frames: &[Var], masks: &[Rc<Tensor>]) -> Var {
        let b = g.shape(frames[0]).0;
        let mut state = self.cell.zero_state(g, b);
        for (x, m) in frames.iter().zip(masks) {
            state = self.cell.masked_step(g, *x, state, m);
        }
        let logit = self.head.forward(g, state.h);
        g.sigmoid(logit)
    }
}

impl Module for SegmentDiscriminator {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.cell.params();
        v.extend(self.head.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.cell.params_mut();
        v.extend(self.head.params_mut());
        v
    }
}

/// The named parameter groups trained by the six sub-steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    ContentEncoder,
    StyleEncoder,
    Decoder,
    ContentClassifier,
    StyleClassifier,
    SegmentClassifier,
}

impl Group {
    pub const ALL: [Group; 6] = [
        Group::ContentEncoder,
        Group::StyleEncoder,
        Group::Decoder,
        Group::ContentClassifier,
        Group::StyleClassifier,
        Group::SegmentClassifier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Group::ContentEncoder => "E_c",
            Group::StyleEncoder => "E_s",
            Group::Decoder => "D",
            Group::ContentClassifier => "C_c",
            Group::StyleClassifier => "C_s",
            Group::SegmentClassifier => "C_seg",
        }
    }

    pub fn from_name(name: &str) -> Option<Group> {
        Group::ALL.into_iter().find(|g| g.name() == name)
    }
}

/// Content embedding `z_c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContentEmbedding(pub Vec<f64>);

/// Style embedding `z_s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleEmbedding(pub Vec<f64>);

/// Probability distribution over the phone inventory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhonePosterior(pub Vec<f64>);

impl PhonePosterior {
    pub fn argmax(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|&p| p >= 0.0 && p.is_finite()) && (self.0.iter().sum::<f64>() - 1.0).abs() <= 1e-6
    }
}

/// All trainable parameters of the module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlcsdModel {
    pub content_encoder: SequenceEncoder,
    pub style_encoder: SequenceEncoder,
    pub decoder: SegmentDecoder,
    pub content_classifier: PhoneClassifier,
    pub style_classifier: PhoneClassifier,
    pub segment_classifier: SegmentDiscriminator,
}

impl PlcsdModel {
    /// Fresh parameters drawn from the configured seed.
    pub fn new(cfg: &PlcsdConfig, n_phones: usize) -> Result<Self> {
        cfg.validate()?;
        if n_phones < 2 {
            return Err(Error::Validation("need at least two phones".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            content_encoder: SequenceEncoder::new("content_encoder", cfg.n_mels, cfg.encoder_width, cfg.content_dim, &mut rng),
            style_encoder: SequenceEncoder::new("style_encoder", cfg.n_mels, cfg.encoder_width, cfg.style_dim, &mut rng),
            decoder: SegmentDecoder::new(cfg.n_mels, cfg.content_dim, cfg.style_dim, cfg.decoder_width, &mut rng),
            content_classifier: PhoneClassifier::new("content_classifier", cfg.content_dim, cfg.classifier_hidden, n_phones, &mut rng),
            style_classifier: PhoneClassifier::new("style_classifier", cfg.style_dim, cfg.classifier_hidden, n_phones, &mut rng)
                .with_input_norm("style_classifier"),
            segment_classifier: SegmentDiscriminator::new(cfg.n_mels, cfg.discriminator_width, &mut rng),
        })
    }

    pub fn n_phones(&self) -> usize {
        self.content_classifier.n_phones()
    }

    pub fn style_dim(&self) -> usize {
        self.style_encoder.output_dim()
    }

    pub fn content_dim(&self) -> usize {
        self.content_encoder.output_dim()
    }

    pub fn n_mels(&self) -> usize {
        self.decoder.n_mels()
    }

    pub fn group(&self, group: Group) -> &dyn Module {
        match group {
            Group::ContentEncoder => &self.content_encoder,
            Group::StyleEncoder => &self.style_encoder,
            Group::Decoder => &self.decoder,
            Group::ContentClassifier => &self.content_classifier,
            Group::StyleClassifier => &self.style_classifier,
            Group::SegmentClassifier => &self.segment_classifier,
        }
    }

    pub fn group_mut(&mut self, group: Group) -> &mut dyn Module {
        match group {
            Group::ContentEncoder => &mut self.content_encoder,
            Group::StyleEncoder => &mut self.style_encoder,
            Group::Decoder => &mut self.decoder,
            Group::ContentClassifier => &mut self.content_classifier,
            Group::StyleClassifier => &mut self.style_classifier,
            Group::SegmentClassifier => &mut self.segment_classifier,
        }
    }

    /// Mutable parameters of several groups, concatenated in the given order.
    pub fn params_of_mut(&mut self, groups: &[Group]) -> Vec<&mut Param> {
        let mut out = Vec::new();
        let Self {
            content_encoder,
            style_encoder,
            decoder,
            content_classifier,
            style_classifier,
            segment_classifier,
        } = self;
        let mut slots: [Option<&mut dyn Module>; 6] = [
            Some(content_encoder),
            Some(style_encoder),
            Some(decoder),
            Some(content_classifier),
            Some(style_classifier),
            Some(segment_classifier),
        ];
        for g in groups {
            let idx = Group::ALL.iter().position(|x| x == g).unwrap();
            let m = slots[idx].take().expect("group listed twice");
            out.extend(m.params_mut());
        }
        out
    }

    pub fn params_of(&self, groups: &[Group]) -> Vec<&Param> {
        groups.iter().flat_map(|g| self.group(*g).params()).collect()
    }

    pub fn is_finite(&self) -> bool {
        Group::ALL
            .iter()
            .all(|g| self.group(*g).params().iter().all(|p| p.value.is_finite()))
    }

    fn single(&self, mel: &MelSpectrogram) -> Result<SegmentBatch> {
        if mel.n_mels() != self.n_mels() {
            return Err(Error::Shape(format!("segment has {} bands, model expects {}", mel.n_mels(), self.n_mels())));
        }
        let data = SegmentData::new(mel, 0);
        SegmentBatch::new(&[&data])
    }

    fn embed(&self, enc: &SequenceEncoder, mel: &MelSpectrogram, component: &str) -> Result<Vec<f64>> {
        let batch = self.single(mel)?;
        let mut g = Graph::new();
        g.set_grad_enabled(false);
        let z = enc.encode(&mut g, &batch);
        let v = g.value(z).data.clone();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric(component, "non-finite embedding"));
        }
        Ok(v)
    }

    pub fn encode_content(&self, mel: &MelSpectrogram) -> Result<ContentEmbedding> {
        self.embed(&self.content_encoder, mel, "content encoder").map(ContentEmbedding)
    }

    pub fn encode_style(&self, mel: &MelSpectrogram) -> Result<StyleEmbedding> {
        self.embed(&self.style_encoder, mel, "style encoder").map(StyleEmbedding)
    }

    /// Embeddings of many segments, batched for speed.
    pub fn encode_batch(&self, segments: &[&SegmentData], which: Group) -> Result<Vec<Vec<f64>>> {
        let enc = match which {
            Group::ContentEncoder => &self.content_encoder,
            Group::StyleEncoder => &self.style_encoder,
            other => return Err(Error::Validation(format!("{} is not an encoder", other.name()))),
        };
        let mut out = Vec::with_capacity(segments.len());
        for chunk in segments.chunks(64) {
            let batch = SegmentBatch::new(chunk)?;
            let mut g = Graph::new();
            g.set_grad_enabled(false);
            let z = enc.encode(&mut g, &batch);
            let v = g.value(z);
            if !v.is_finite() {
                return Err(Error::numeric(which.name(), "non-finite embedding"));
            }
            out.extend((0..v.rows).map(|r| v.row(r).to_vec()));
        }
        Ok(out)
    }

    fn classify(&self, clf: &PhoneClassifier, z: &[f64]) -> Result<PhonePosterior> {
        if z.len() != clf.input_dim() {
            return Err(Error::Shape(format!("embedding has dimension {}, classifier expects {}", z.len(), clf.input_dim())));
        }
        let mut g = Graph::new();
        g.set_grad_enabled(false);
        let zv = g.constant(Tensor::row_vector(z));
        let p = clf.posterior(&mut g, zv);
        Ok(PhonePosterior(g.value(p).data.clone()))
    }

    pub fn classify_content_phone(&self, z: &ContentEmbedding) -> Result<PhonePosterior> {
        self.classify(&self.content_classifier, &z.0)
    }

    pub fn classify_style_phone(&self, z: &StyleEmbedding) -> Result<PhonePosterior> {
        self.classify(&self.style_classifier, &z.0)
    }

    /// Probability that the segment is natural speech.
    pub fn discriminate_segment(&self, mel: &MelSpectrogram) -> Result<f64> {
        let batch = self.single(mel)?;
        let mut g = Graph::new();
        g.set_grad_enabled(false);
        let frames: Vec<Var> = batch.steps.iter().map(|x| g.constant(x.clone())).collect();
        let p = self.segment_classifier.probability(&mut g, &frames, &batch.masks);
        let p = g.value(p).item();
        if !p.is_finite() {
            return Err(Error::numeric("segment classifier", "non-finite probability"));
        }
        Ok(p)
    }

    /// Decodes a segment. With a teacher, exactly `teacher.n_frames()` frames
    /// are produced under teacher forcing; otherwise decoding runs free until
    /// the gate fires or `max_frames` is reached.
    pub fn decode_segment(
        &self,
        content: &ContentEmbedding,
        style: &StyleEmbedding,
        teacher: Option<&MelSpectrogram>,
        max_frames: usize,
        gate_threshold: f64,
    ) -> Result<FreeRunOutput> {
        let cd = self.decoder.cell.input_dim() - self.n_mels();
        if content.0.len() + style.0.len() != cd {
            return Err(Error::Shape(format!(
                "embeddings have total dimension {}, decoder expects {cd}",
                content.0.len() + style.0.len()
            )));
        }
        match teacher {
            Some(mel) => {
                let batch = self.single(mel)?;
                let mut g = Graph::new();
                g.set_grad_enabled(false);
                let c = g.constant(Tensor::row_vector(&content.0));
                let s = g.constant(Tensor::row_vector(&style.0));
                let out = self.decoder.teacher_forced(&mut g, c, s, &batch);
                let rows: Vec<Vec<f64>> = out.frames.iter().map(|f| g.value(*f).data.clone()).collect();
                let gates = out.gates.iter().map(|p| g.value(*p).item()).collect();
                Ok(FreeRunOutput {
                    frames: Tensor::from_rows(&rows),
                    gates,
                    truncated: false,
                })
            }
            None => Ok(self.decoder.free_run(&content.0, &style.0, max_frames, gate_threshold)),
        }
    }

    /// Teacher-forced reconstruction `D(E_c(s), E_s(s))` of each segment.
    pub fn reconstruct_batch(&self, segments: &[&SegmentData]) -> Result<Vec<Tensor>> {
        let mut out = Vec::with_capacity(segments.len());
        for chunk in segments.chunks(64) {
            let batch = SegmentBatch::new(chunk)?;
            let mut g = Graph::new();
            g.set_grad_enabled(false);
            let zc = self.content_encoder.encode(&mut g, &batch);
            let zs = self.style_encoder.encode(&mut g, &batch);
            let dec = self.decoder.teacher_forced(&mut g, zc, zs, &batch);
            for (i, &n) in batch.lengths.iter().enumerate() {
                let rows: Vec<&[f64]> = (0..n).map(|t| g.value(dec.frames[t]).row(i)).collect();
                out.push(Tensor::from_rows(&rows));
            }
        }
        Ok(out)
    }
}
