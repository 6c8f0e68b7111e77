//! Attention-based autoregressive decoder from combined phone sequences to
//! mel frames, with a stop gate.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{AcousticConfig, AttentionKind};
use super::sequence::CombinedSequence;
use crate::error::{Error, Result};
use crate::nn::{Conv1d, Graph, Linear, LstmCell, LstmState, Module, Param, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcousticModel {
    pub attention: AttentionKind,
    pub prenet: Linear,
    pub cell: LstmCell,
    pub memory_proj: Linear,
    pub query_proj: Linear,
    pub location_conv: Conv1d,
    pub location_proj: Linear,
    pub energy: Linear,
    pub frame_head: Linear,
    pub gate_head: Linear,
}

/// Graph nodes of a teacher-forced pass, one entry per output frame.
pub struct AcousticSteps {
    pub frames: Vec<Var>,
    /// Stop probabilities, `1 x 1` each.
    pub gates: Vec<Var>,
    /// Attention weights over the memory, `1 x m` each.
    pub alignments: Vec<Var>,
}

/// Result of running the acoustic model outside training.
#[derive(Clone, Debug, PartialEq)]
pub struct AcousticOutput {
    /// `T x n_mels`.
    pub frames: Tensor,
    pub gates: Vec<f64>,
    /// `T x m` attention weights.
    pub alignments: Tensor,
    /// True when free-running decoding hit the frame limit before the gate fired.
    pub truncated: bool,
}

impl AcousticOutput {
    /// Memory position with the largest attention weight, per frame.
    pub fn attended_phones(&self) -> Vec<usize> {
        (0..self.alignments.rows)
            .map(|t| {
                let row = self.alignments.row(t);
                (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a))).unwrap_or(0)
            })
            .collect()
    }
}

struct DecoderState {
    lstm: LstmState,
    context: Var,
    cumulative: Var,
}

impl AcousticModel {
    pub fn new(memory_dim: usize, n_mels: usize, cfg: &AcousticConfig, rng: &mut ChaCha8Rng) -> Self {
        let a = cfg.attention_dim;
        let h = cfg.decoder_width;
        Self {
            attention: cfg.attention,
            prenet: Linear::new("am.prenet", n_mels, cfg.prenet_dim, rng),
            cell: LstmCell::new("am.cell", cfg.prenet_dim + memory_dim, h, rng),
            memory_proj: Linear::new("am.memory_proj", memory_dim, a, rng),
            query_proj: Linear::new("am.query_proj", h, a, rng),
            location_conv: Conv1d::new("am.location_conv", 1, cfg.location_filters, cfg.location_kernel, rng),
            location_proj: Linear::new("am.location_proj", cfg.location_filters, a, rng),
            energy: Linear::new("am.energy", a, 1, rng),
            frame_head: Linear::new("am.frame_head", h + memory_dim, n_mels, rng),
            gate_head: Linear::new("am.gate_head", h + memory_dim, 1, rng),
        }
    }

    pub fn memory_dim(&self) -> usize {
        self.memory_proj.input_dim()
    }

    pub fn n_mels(&self) -> usize {
        self.frame_head.output_dim()
    }

    fn initial_state(&self, g: &mut Graph, m: usize) -> DecoderState {
        DecoderState {
            lstm: self.cell.zero_state(g, 1),
            context: g.constant(Tensor::zeros(1, self.memory_dim())),
            cumulative: g.constant(Tensor::zeros(m, 1)),
        }
    }

    /// One decoder step: returns (frame, stop probability, attention weights).
    /// `keep` is an optional inverted-dropout mask for the prenet output.
    fn step(&self, g: &mut Graph, prev: Var, memory: Var, keys: Var, state: &mut DecoderState, keep: Option<Tensor>) -> (Var, Var, Var) {
        let p = self.prenet.forward(g, prev);
        let mut p = g.relu(p);
        if let Some(mask) = keep {
            let mask = g.constant(mask);
            p = g.mul(p, mask);
        }
        let x = g.concat_cols(&[p, state.context]);
        state.lstm = self.cell.step(g, x, state.lstm);
        let q = self.query_proj.forward(g, state.lstm.h);
        let mut e = g.add_row(keys, q);
        if self.attention == AttentionKind::LocationSensitive {
            let f = self.location_conv.forward(g, state.cumulative);
            let lf = self.location_proj.forward(g, f);
            e = g.add(e, lf);
        }
        let e = g.tanh(e);
        let scores = self.energy.forward(g, e);
        let scores = g.transpose(scores);
        let alpha = g.softmax_rows(scores);
        state.context = g.matmul(alpha, memory);
        let alpha_col = g.transpose(alpha);
        state.cumulative = g.add(state.cumulative, alpha_col);
        let out = g.concat_cols(&[state.lstm.h, state.context]);
        let frame = self.frame_head.forward(g, out);
        let gate = self.gate_head.forward(g, out);
        let gate = g.sigmoid(gate);
        (frame, gate, alpha)
    }

    /// Teacher-forced pass over `memory` (`m x memory_dim`); produces exactly
    /// `teacher.rows` frames. With `dropout`, prenet units are dropped at the
    /// given rate using the supplied generator (training only), which keeps
    /// the decoder from simply copying the previous frame.
    pub fn teacher_forced(&self, g: &mut Graph, memory: Var, teacher: &Tensor, mut dropout: Option<(f64, &mut ChaCha8Rng)>) -> AcousticSteps {
        let m = g.shape(memory).0;
        let keys = self.memory_proj.forward(g, memory);
        let mut state = self.initial_state(g, m);
        let mut prev = g.constant(Tensor::zeros(1, self.n_mels()));
        let mut steps = AcousticSteps {
            frames: Vec::with_capacity(teacher.rows),
            gates: Vec::with_capacity(teacher.rows),
            alignments: Vec::with_capacity(teacher.rows),
        };
        let width = self.prenet.output_dim();
        for t in 0..teacher.rows {
            let keep = dropout.as_mut().map(|(rate, rng)| {
                let scale = 1.0 / (1.0 - *rate);
                Tensor::from_vec(1, width, (0..width).map(|_| if rng.gen::<f64>() < *rate { 0.0 } else { scale }).collect())
            });
            let (frame, gate, alpha) = self.step(g, prev, memory, keys, &mut state, keep);
            steps.frames.push(frame);
            steps.gates.push(gate);
            steps.alignments.push(alpha);
            prev = g.constant(Tensor::row_vector(teacher.row(t)));
        }
        steps
    }

    fn check_input(&self, combined: &CombinedSequence) -> Result<()> {
        if combined.is_empty() {
            return Err(Error::Validation("acoustic model input is empty".into()));
        }
        if combined.dim() != self.memory_dim() {
            return Err(Error::Shape(format!(
                "combined vectors have dimension {}, acoustic model expects {}",
                combined.dim(),
                self.memory_dim()
            )));
        }
        Ok(())
    }

    /// Mel frames for `combined`: teacher-forced when `teacher` is given
    /// (one output frame per teacher frame), otherwise free-running until the
    /// stop gate reaches `gate_threshold` or `max_frames` frames were produced.
    pub fn forward(&self, combined: &CombinedSequence, teacher: Option<&Tensor>, max_frames: usize, gate_threshold: f64) -> Result<AcousticOutput> {
        self.check_input(combined)?;
        let mut g = Graph::new();
        g.set_grad_enabled(false);
        let memory = g.constant(combined.vectors.clone());
        if let Some(teacher) = teacher {
            if teacher.cols != self.n_mels() || teacher.rows == 0 {
                return Err(Error::Shape(format!(
                    "teacher is {}x{}, expected a non-empty mel with {} bands",
                    teacher.rows,
                    teacher.cols,
                    self.n_mels()
                )));
            }
            let steps = self.teacher_forced(&mut g, memory, teacher, None);
            return Ok(collect(&g, &steps, false));
        }
        if max_frames == 0 {
            return Err(Error::Validation("max_frames must be positive".into()));
        }
        let m = combined.len();
        let keys = self.memory_proj.forward(&mut g, memory);
        let mut state = self.initial_state(&mut g, m);
        let mut prev = g.constant(Tensor::zeros(1, self.n_mels()));
        let mut steps = AcousticSteps {
            frames: Vec::new(),
            gates: Vec::new(),
            alignments: Vec::new(),
        };
        let mut truncated = true;
        for _ in 0..max_frames {
            let (frame, gate, alpha) = self.step(&mut g, prev, memory, keys, &mut state, None);
            steps.frames.push(frame);
            steps.gates.push(gate);
            steps.alignments.push(alpha);
            prev = frame;
            if g.value(gate).item() >= gate_threshold {
                truncated = false;
                break;
            }
        }
        let out = collect(&g, &steps, truncated);
        if !out.frames.is_finite() {
            return Err(Error::numeric("acoustic model", "non-finite output frames"));
        }
        Ok(out)
    }
}

fn collect(g: &Graph, steps: &AcousticSteps, truncated: bool) -> AcousticOutput {
    let rows: Vec<Vec<f64>> = steps.frames.iter().map(|&f| g.value(f).data.clone()).collect();
    let align: Vec<Vec<f64>> = steps.alignments.iter().map(|&a| g.value(a).data.clone()).collect();
    AcousticOutput {
        frames: Tensor::from_rows(&rows),
        gates: steps.gates.iter().map(|&p| g.value(p).item()).collect(),
        alignments: Tensor::from_rows(&align),
        truncated,
    }
}

impl Module for AcousticModel {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.prenet.params();
        v.extend(self.cell.params());
        v.extend(self.memory_proj.params());
        v.extend(self.query_proj.params());
        v.extend(self.location_conv.params());
        v.extend(self.location_proj.params());
        v.extend(self.energy.params());
        v.extend(self.frame_head.params());
        v.extend(self.gate_head.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.prenet.params_mut();
        v.extend(self.cell.params_mut());
        v.extend(self.memory_proj.params_mut());
        v.extend(self.query_proj.params_mut());
        v.extend(self.location_conv.params_mut());
        v.extend(self.location_proj.params_mut());
        v.extend(self.energy.params_mut());
        v.extend(self.frame_head.params_mut());
        v.extend(self.gate_head.params_mut());
        v
    }
}
