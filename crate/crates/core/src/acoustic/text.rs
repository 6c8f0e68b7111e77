//! Phone embedding table followed by residual 1-D convolutions.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::AcousticConfig;
use super::sequence::TextEmbeddingSequence;
use crate::corpus::PhoneInventory;
use crate::error::{Error, Result};
use crate::nn::{Conv1d, Embedding, Graph, Module, Param, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextEncoder {
    pub embedding: Embedding,
    pub convs: Vec<Conv1d>,
}

impl TextEncoder {
    pub fn new(n_phones: usize, cfg: &AcousticConfig, rng: &mut ChaCha8Rng) -> Self {
        Self {
            embedding: Embedding::new("text.embedding", n_phones, cfg.text_dim, rng),
            convs: (0..cfg.text_conv_layers)
                .map(|i| Conv1d::new(&format!("text.conv{i}"), cfg.text_dim, cfg.text_dim, cfg.text_kernel, rng))
                .collect(),
        }
    }

    pub fn n_phones(&self) -> usize {
        self.embedding.table.value.rows
    }

    pub fn dim(&self) -> usize {
        self.embedding.table.value.cols
    }

    /// `m x text_dim` embeddings of the phone indices.
    pub fn forward(&self, g: &mut Graph, phones: &[usize]) -> Var {
        let mut x = self.embedding.forward(g, phones);
        for conv in &self.convs {
            let y = conv.forward(g, x);
            let y = g.relu(y);
            x = g.add(x, y);
        }
        x
    }

    pub fn encode_indices(&self, phones: &[usize]) -> Result<TextEmbeddingSequence> {
        if phones.is_empty() {
            return Err(Error::Validation("cannot encode an empty phone sequence".into()));
        }
        if let Some(&bad) = phones.iter().find(|&&p| p >= self.n_phones()) {
            return Err(Error::UnknownPhone(format!("index {bad}")));
        }
        let mut g = Graph::new();
        g.set_grad_enabled(false);
        let x = self.forward(&mut g, phones);
        Ok(TextEmbeddingSequence::new(g.value(x).clone()))
    }

    /// Text embedding sequence of labelled phones.
    pub fn encode_text<S: AsRef<str>>(&self, inventory: &PhoneInventory, phones: &[S]) -> Result<TextEmbeddingSequence> {
        let idx = phone_indices(inventory, phones)?;
        self.encode_indices(&idx)
    }
}

impl Module for TextEncoder {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.embedding.params();
        for c in &self.convs {
            v.extend(c.params());
        }
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.embedding.params_mut();
        for c in &mut self.convs {
            v.extend(c.params_mut());
        }
        v
    }
}

/// Inventory indices of `phones`; an unknown label is reported by name.
pub fn phone_indices<S: AsRef<str>>(inventory: &PhoneInventory, phones: &[S]) -> Result<Vec<usize>> {
    if phones.is_empty() {
        return Err(Error::Validation("empty phone sequence".into()));
    }
    phones
        .iter()
        .map(|p| inventory.index_of(p.as_ref()).map_err(|_| Error::UnknownPhone(p.as_ref().to_string())))
        .collect()
}
