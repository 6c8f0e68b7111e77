use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the decoder scores memory positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionKind {
    /// Content scores plus features of the cumulative previous alignment.
    LocationSensitive,
    /// Content scores only.
    Content,
}

/// Text encoder and attention-based acoustic model, trained jointly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcousticConfig {
    pub text_dim: usize,
    pub text_conv_layers: usize,
    pub text_kernel: usize,
    pub prenet_dim: usize,
    /// Dropout rate of the decoder prenet during training.
    pub prenet_dropout: f64,
    pub attention: AttentionKind,
    pub attention_dim: usize,
    pub location_filters: usize,
    pub location_kernel: usize,
    pub decoder_width: usize,
    /// Width of the diagonal prior in the guided-attention penalty, as a
    /// fraction of the normalized time axes.
    pub guided_attention_sigma: f64,
    pub guided_attention_weight: f64,
    pub learning_rate: f64,
    pub clip_norm: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub gate_threshold: f64,
    pub max_decode_frames: usize,
    pub seed: u64,
}

impl Default for AcousticConfig {
    fn default() -> Self {
        Self {
            text_dim: 64,
            text_conv_layers: 2,
            text_kernel: 5,
            prenet_dim: 64,
            prenet_dropout: 0.5,
            attention: AttentionKind::LocationSensitive,
            attention_dim: 64,
            location_filters: 8,
            location_kernel: 7,
            decoder_width: 256,
            guided_attention_sigma: 0.2,
            guided_attention_weight: 1.0,
            learning_rate: 1e-3,
            clip_norm: Some(1.0),
            batch_size: 8,
            epochs: 30,
            gate_threshold: 0.5,
            max_decode_frames: 400,
            seed: 0,
        }
    }
}

impl AcousticConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("text_dim", self.text_dim),
            ("prenet_dim", self.prenet_dim),
            ("attention_dim", self.attention_dim),
            ("location_filters", self.location_filters),
            ("decoder_width", self.decoder_width),
            ("batch_size", self.batch_size),
            ("max_decode_frames", self.max_decode_frames),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Validation(format!("acoustic config: {name} must be positive")));
            }
        }
        if self.text_kernel % 2 == 0 || self.location_kernel % 2 == 0 {
            return Err(Error::Validation("acoustic config: convolution kernels must be odd".into()));
        }
        if !(0.0..1.0).contains(&self.prenet_dropout) {
            return Err(Error::Validation("acoustic config: prenet_dropout must lie in [0, 1)".into()));
        }
        if !(self.gate_threshold > 0.0 && self.gate_threshold < 1.0) {
            return Err(Error::Validation("acoustic config: gate_threshold must lie in (0, 1)".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.guided_attention_sigma > 0.0) || !(self.guided_attention_weight >= 0.0) {
            return Err(Error::Validation("acoustic config: rates and weights must be positive".into()));
        }
        Ok(())
    }
}

/// Feed-forward Transformer style predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub model_dim: usize,
    pub blocks: usize,
    pub kernel: usize,
    pub ffn_dim: usize,
    pub learning_rate: f64,
    pub clip_norm: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            model_dim: 64,
            blocks: 3,
            kernel: 3,
            ffn_dim: 128,
            learning_rate: 1e-3,
            clip_norm: Some(1.0),
            batch_size: 8,
            epochs: 50,
            seed: 0,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.model_dim == 0 || self.ffn_dim == 0 || self.batch_size == 0 {
            return Err(Error::Validation("predictor config: dimensions and batch size must be positive".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Validation("predictor config: kernel must be odd".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Validation("predictor config: learning_rate must be positive".into()));
        }
        Ok(())
    }
}
