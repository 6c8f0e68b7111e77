//! The three generation modes on top of trained models.

use serde::{Deserialize, Serialize};

use super::interpolate::interpolate_style_sequence;
use crate::acoustic::{combine, utterance_style_sequence, AcousticModel, AcousticOutput, CombinedSequence, StyleEmbeddingSequence, StylePredictor, TextEncoder};
use crate::corpus::{MelSpectrogram, PhoneInventory, SilenceLabels, Utterance};
use crate::error::{Error, Result};
use crate::plcsd::PlcsdModel;

/// Which generation path produced an output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    Reconstruct,
    Transfer,
    Tts,
}

impl GenerationMode {
    pub fn name(self) -> &'static str {
        match self {
            GenerationMode::Reconstruct => "reconstruct",
            GenerationMode::Transfer => "transfer",
            GenerationMode::Tts => "tts",
        }
    }
}

/// A generation request; `reference` is required except for TTS.
#[derive(Clone, Debug)]
pub struct GenerationRequest {
    pub mode: GenerationMode,
    pub source_phones: Vec<String>,
    pub reference: Option<Utterance>,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<()> {
        match (self.mode, &self.reference) {
            (GenerationMode::Reconstruct | GenerationMode::Transfer, None) => {
                Err(Error::Validation(format!("{} needs a reference utterance", self.mode.name())))
            }
            (GenerationMode::Transfer | GenerationMode::Tts, _) if self.source_phones.is_empty() => {
                Err(Error::Validation(format!("{} needs source phones", self.mode.name())))
            }
            _ => Ok(()),
        }
    }
}

/// Frozen models and decoding limits shared by all generation modes.
#[derive(Clone, Copy)]
pub struct Synthesizer<'a> {
    pub plcsd: &'a PlcsdModel,
    pub text: &'a TextEncoder,
    pub acoustic: &'a AcousticModel,
    /// Needed only for TTS.
    pub predictor: Option<&'a StylePredictor>,
    pub inventory: &'a PhoneInventory,
    pub silence: &'a SilenceLabels,
    pub max_frames: usize,
    pub gate_threshold: f64,
    pub frame_shift: f64,
}

/// Everything a generation produced, including the intermediate sequences.
#[derive(Clone, Debug)]
pub struct Generation {
    pub mel: MelSpectrogram,
    pub style: StyleEmbeddingSequence,
    pub combined: CombinedSequence,
    pub output: AcousticOutput,
}

impl Synthesizer<'_> {
    fn decode(&self, phones: &[String], style: StyleEmbeddingSequence) -> Result<Generation> {
        let text = self.text.encode_text(self.inventory, phones)?;
        let combined = combine(&text, &style)?;
        let output = self.acoustic.forward(&combined, None, self.max_frames, self.gate_threshold)?;
        let mel = MelSpectrogram::from_tensor(&output.frames, self.frame_shift)?;
        Ok(Generation {
            mel,
            style,
            combined,
            output,
        })
    }

    /// Resynthesis of `utt` from its own phones and its own style sequence.
    pub fn reconstruct(&self, utt: &Utterance) -> Result<Generation> {
        let style = utterance_style_sequence(self.plcsd, utt, self.silence)?;
        self.decode(&utt.phone_sequence, style)
    }

    /// `source_phones` spoken with the style of `reference`, whose style
    /// sequence is interpolated to the source length.
    pub fn transfer(&self, source_phones: &[String], reference: &Utterance) -> Result<Generation> {
        if source_phones.is_empty() {
            return Err(Error::Validation("transfer needs source phones".into()));
        }
        let style = utterance_style_sequence(self.plcsd, reference, self.silence)?;
        let style = interpolate_style_sequence(&style, source_phones.len())?;
        self.decode(source_phones, style)
    }

    /// Text-to-speech: the style sequence comes from the predictor.
    pub fn synthesize_tts(&self, phones: &[String]) -> Result<Generation> {
        let predictor = self
            .predictor
            .ok_or_else(|| Error::MissingPrerequisite("tts needs a trained style predictor".into()))?;
        let text = self.text.encode_text(self.inventory, phones)?;
        let style = predictor.predict(&text)?;
        self.decode(phones, style)
    }

    pub fn generate(&self, request: &GenerationRequest) -> Result<Generation> {
        request.validate()?;
        match request.mode {
            GenerationMode::Reconstruct => self.reconstruct(request.reference.as_ref().expect("validated")),
            GenerationMode::Transfer => self.transfer(&request.source_phones, request.reference.as_ref().expect("validated")),
            GenerationMode::Tts => self.synthesize_tts(&request.source_phones),
        }
    }
}
