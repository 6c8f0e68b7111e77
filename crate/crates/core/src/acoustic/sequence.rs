//! Per-phone embedding sequences exchanged between the stages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::plcsd::StyleEmbedding;

macro_rules! sequence_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        pub struct $name {
            /// One row per phone.
            pub vectors: Tensor,
        }

        impl $name {
            pub fn new(vectors: Tensor) -> Self {
                Self { vectors }
            }

            pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
                if rows.is_empty() {
                    return Err(Error::Validation(concat!(stringify!($name), " must not be empty").into()));
                }
                let dim = rows[0].as_ref().len();
                if rows.iter().any(|r| r.as_ref().len() != dim) {
                    return Err(Error::Shape(concat!(stringify!($name), ": rows differ in dimension").into()));
                }
                Ok(Self::new(Tensor::from_rows(rows)))
            }

            pub fn len(&self) -> usize {
                self.vectors.rows
            }

            pub fn is_empty(&self) -> bool {
                self.vectors.rows == 0
            }

            pub fn dim(&self) -> usize {
                self.vectors.cols
            }

            pub fn vector(&self, k: usize) -> &[f64] {
                self.vectors.row(k)
            }
        }
    };
}

sequence_type!(
    /// Text encoder output for an utterance's phones.
    TextEmbeddingSequence
);
sequence_type!(
    /// Phone-level style embeddings of an utterance.
    StyleEmbeddingSequence
);
sequence_type!(
    /// Text and style vectors concatenated per phone, text first.
    CombinedSequence
);

impl StyleEmbeddingSequence {
    pub fn from_embeddings(embeddings: &[StyleEmbedding]) -> Result<Self> {
        let rows: Vec<&[f64]> = embeddings.iter().map(|e| e.0.as_slice()).collect();
        Self::from_rows(&rows)
    }

    pub fn embeddings(&self) -> Vec<StyleEmbedding> {
        (0..self.len()).map(|k| StyleEmbedding(self.vector(k).to_vec())).collect()
    }
}

/// Concatenates `text[k]` and `style[k]` for every phone `k`.
pub fn combine(text: &TextEmbeddingSequence, style: &StyleEmbeddingSequence) -> Result<CombinedSequence> {
    if text.len() != style.len() {
        return Err(Error::Shape(format!(
            "text sequence has {} phones but style sequence has {}; interpolate the style sequence first",
            text.len(),
            style.len()
        )));
    }
    if text.is_empty() {
        return Err(Error::Validation("cannot combine empty sequences".into()));
    }
    let rows: Vec<Vec<f64>> = (0..text.len())
        .map(|k| {
            let mut v = text.vector(k).to_vec();
            v.extend_from_slice(style.vector(k));
            v
        })
        .collect();
    Ok(CombinedSequence::new(Tensor::from_rows(&rows)))
}
