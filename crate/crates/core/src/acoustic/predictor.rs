//! Style predictor: feed-forward Transformer blocks (self-attention and 1-D
//! convolution, each with a residual connection and layer normalization)
//! mapping text embeddings to standardized style embeddings.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::PredictorConfig;
use super::sequence::{StyleEmbeddingSequence, TextEmbeddingSequence};
use crate::error::{Error, Result};
use crate::nn::{Conv1d, Graph, LayerNorm, Linear, Module, Param, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FftBlock {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    pub norm1: LayerNorm,
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub norm2: LayerNorm,
}

impl FftBlock {
    fn new(name: &str, cfg: &PredictorConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = cfg.model_dim;
        Self {
            query: Linear::new(&format!("{name}.query"), d, d, rng),
            key: Linear::new(&format!("{name}.key"), d, d, rng),
            value: Linear::new(&format!("{name}.value"), d, d, rng),
            out: Linear::new(&format!("{name}.out"), d, d, rng),
            norm1: LayerNorm::new(&format!("{name}.norm1"), d),
            conv1: Conv1d::new(&format!("{name}.conv1"), d, cfg.ffn_dim, cfg.kernel, rng),
            conv2: Conv1d::new(&format!("{name}.conv2"), cfg.ffn_dim, d, cfg.kernel, rng),
            norm2: LayerNorm::new(&format!("{name}.norm2"), d),
        }
    }

    fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let d = g.shape(x).1 as f64;
        let q = self.query.forward(g, x);
        let k = self.key.forward(g, x);
        let v = self.value.forward(g, x);
        let kt = g.transpose(k);
        let scores = g.matmul(q, kt);
        let scores = g.scale(scores, 1.0 / d.sqrt());
        let weights = g.softmax_rows(scores);
        let attended = g.matmul(weights, v);
        let attended = self.out.forward(g, attended);
        let x = g.add(x, attended);
        let x = self.norm1.forward(g, x);
        let h = self.conv1.forward(g, x);
        let h = g.relu(h);
        let h = self.conv2.forward(g, h);
        let x = g.add(x, h);
        self.norm2.forward(g, x)
    }
}

impl Module for FftBlock {
    fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        for m in [&self.query as &dyn Module, &self.key, &self.value, &self.out, &self.norm1, &self.conv1, &self.conv2, &self.norm2] {
            v.extend(m.params());
        }
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.query.params_mut();
        v.extend(self.key.params_mut());
        v.extend(self.value.params_mut());
        v.extend(self.out.params_mut());
        v.extend(self.norm1.params_mut());
        v.extend(self.conv1.params_mut());
        v.extend(self.conv2.params_mut());
        v.extend(self.norm2.params_mut());
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StylePredictor {
    pub input: Linear,
    pub blocks: Vec<FftBlock>,
    pub output: Linear,
    /// Per-dimension statistics of the training targets. Stored as
    /// parameters for checkpointing; they never receive gradients.
    pub target_mean: Param,
    pub target_std: Param,
}

/// Sinusoidal position code, `m x d`.
pub fn positional_encoding(m: usize, d: usize) -> Tensor {
    let mut t = Tensor::zeros(m, d);
    for pos in 0..m {
        for i in 0..d {
            let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 * rate;
            t.set(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    t
}

impl StylePredictor {
    pub fn new(text_dim: usize, style_dim: usize, cfg: &PredictorConfig, rng: &mut ChaCha8Rng) -> Self {
        Self {
            input: Linear::new("sp.input", text_dim, cfg.model_dim, rng),
            blocks: (0..cfg.blocks).map(|i| FftBlock::new(&format!("sp.block{i}"), cfg, rng)).collect(),
            output: Linear::new("sp.output", cfg.model_dim, style_dim, rng),
            target_mean: Param::zeros("sp.target_mean", 1, style_dim),
            target_std: Param::new("sp.target_std", Tensor::filled(1, style_dim, 1.0)),
        }
    }

    pub fn text_dim(&self) -> usize {
        self.input.input_dim()
    }

    pub fn style_dim(&self) -> usize {
        self.output.output_dim()
    }

    /// Standardized predictions, `m x style_dim`.
    pub fn forward_normalized(&self, g: &mut Graph, text: Var) -> Var {
        let (m, _) = g.shape(text);
        let x = self.input.forward(g, text);
        let pe = g.constant(positional_encoding(m, self.input.output_dim()));
        let mut x = g.add(x, pe);
        for b in &self.blocks {
            x = b.forward(g, x);
        }
        self.output.forward(g, x)
    }

    /// Maps targets into the standardized space the network predicts in.
    pub fn normalize_targets(&self, targets: &Tensor) -> Tensor {
        let mut out = targets.clone();
        for r in 0..out.rows {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.target_mean.value.data[c]) / self.target_std.value.data[c];
            }
        }
        out
    }

    /// Sets the target statistics from training targets (rows of all pairs).
    pub fn fit_normalization(&mut self, targets: &[&Tensor]) -> Result<()> {
        let d = self.style_dim();
        let n: usize = targets.iter().map(|t| t.rows).sum();
        if n == 0 {
            return Err(Error::Validation("no style targets".into()));
        }
        let mut mean = vec![0.0; d];
        for t in targets {
            for r in 0..t.rows {
                for (m, v) in mean.iter_mut().zip(t.row(r)) {
                    *m += v;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for t in targets {
            for r in 0..t.rows {
                for ((s, v), m) in var.iter_mut().zip(t.row(r)).zip(&mean) {
                    *s += (v - m).powi(2);
                }
            }
        }
        // Constant dimensions keep unit scale instead of dividing by zero.
        let std: Vec<f64> = var.iter().map(|s| (s / n as f64).sqrt()).map(|s| if s > 1e-8 { s } else { 1.0 }).collect();
        self.target_mean.value = Tensor::from_vec(1, d, mean.iter().map(|&v| v as f32 as f64).collect());
        self.target_std.value = Tensor::from_vec(1, d, std.iter().map(|&v| v as f32 as f64).collect());
        Ok(())
    }

    /// Style embedding sequence predicted from a text embedding sequence.
    pub fn predict(&self, text: &TextEmbeddingSequence) -> Result<StyleEmbeddingSequence> {
        if text.is_empty() {
            return Err(Error::Validation("cannot predict style for an empty sequence".into()));
        }
        if text.dim() != self.text_dim() {
            return Err(Error::Shape(format!("text vectors have dimension {}, predictor expects {}", text.dim(), self.text_dim())));
        }
        let mut g = Graph::new();
        g.set_grad_enabled(false);
        let x = g.constant(text.vectors.clone());
        let y = self.forward_normalized(&mut g, x);
        let mut out = g.value(y).clone();
        for r in 0..out.rows {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = *v * self.target_std.value.data[c] + self.target_mean.value.data[c];
            }
        }
        if !out.is_finite() {
            return Err(Error::numeric("style predictor", "non-finite prediction"));
        }
        Ok(StyleEmbeddingSequence::new(out))
    }
}

impl Module for StylePredictor {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.input.params();
        for b in &self.blocks {
            v.extend(b.params());
        }
        v.extend(self.output.params());
        v.extend([&self.target_mean, &self.target_std]);
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.input.params_mut();
        for b in &mut self.blocks {
            v.extend(b.params_mut());
        }
        v.extend(self.output.params_mut());
        v.extend([&mut self.target_mean, &mut self.target_std]);
        v
    }
}
