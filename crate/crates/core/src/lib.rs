//! Phone-level content/style disentanglement for expressive speech synthesis.

pub mod acoustic;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod evalmetrics;
pub mod nn;
pub mod plcsd;
pub mod synth;

pub use error::{Error, Result};
