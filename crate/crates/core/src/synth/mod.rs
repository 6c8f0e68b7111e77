//! Generation: reconstruction, style transfer, text-to-speech and waveform
//! synthesis.

pub mod generate;
pub mod interpolate;
pub mod vocoder;

pub use generate::{Generation, GenerationMode, GenerationRequest, Synthesizer};
pub use interpolate::interpolate_style_sequence;
pub use vocoder::{vocode, MelInverter, VocoderConfig};
