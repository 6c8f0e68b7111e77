use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyper-parameters of the phone-level disentanglement module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlcsdConfig {
    pub n_mels: usize,
    pub content_dim: usize,
    pub style_dim: usize,
    /// Total width of each bidirectional encoder (half per direction).
    pub encoder_width: usize,
    pub decoder_width: usize,
    pub classifier_hidden: usize,
    pub discriminator_width: usize,
    /// Learning rate of each of the six training sub-steps, in order.
    pub learning_rates: [f64; 6],
    /// Weight of the contrast term relative to the classification term in sub-step 2.
    pub contrast_weight: f64,
    pub clip_norm: Option<f64>,
    pub batch_size: usize,
    pub gate_threshold: f64,
    pub max_decode_frames: usize,
    pub max_epochs: usize,
    /// Stop when validation L_auto has not improved by `early_stop_min_improvement`
    /// (relative) for this many epochs.
    pub early_stop_patience: usize,
    pub early_stop_min_improvement: f64,
    pub seed: u64,
}

impl Default for PlcsdConfig {
    fn default() -> Self {
        Self {
            n_mels: 80,
            content_dim: 64,
            style_dim: 64,
            encoder_width: 512,
            decoder_width: 512,
            classifier_hidden: 256,
            discriminator_width: 256,
            learning_rates: [1e-3, 1e-3, 1e-4, 1e-4, 1e-4, 1e-4],
            contrast_weight: 1.0,
            clip_norm: Some(5.0),
            batch_size: 32,
            gate_threshold: 0.5,
            max_decode_frames: 200,
            max_epochs: 50,
            early_stop_patience: 5,
            early_stop_min_improvement: 0.01,
            seed: 0,
        }
    }
}

impl PlcsdConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_mels", self.n_mels),
            ("content_dim", self.content_dim),
            ("style_dim", self.style_dim),
            ("decoder_width", self.decoder_width),
            ("classifier_hidden", self.classifier_hidden),
            ("discriminator_width", self.discriminator_width),
            ("batch_size", self.batch_size),
            ("max_decode_frames", self.max_decode_frames),
            ("max_epochs", self.max_epochs),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Validation(format!("plcsd config: {name} must be positive")));
            }
        }
        if self.encoder_width < 2 || self.encoder_width % 2 != 0 {
            return Err(Error::Validation("plcsd config: encoder_width must be a positive even number".into()));
        }
        if !(self.gate_threshold > 0.0 && self.gate_threshold < 1.0) {
            return Err(Error::Validation("plcsd config: gate_threshold must lie in (0, 1)".into()));
        }
        if self.learning_rates.iter().any(|&lr| !(lr > 0.0)) || !(self.contrast_weight >= 0.0) {
            return Err(Error::Validation("plcsd config: learning rates must be positive".into()));
        }
        Ok(())
    }
}
