//! Utterance-level stage: text encoder, attention-based acoustic model and
//! the style predictor.

pub mod config;
pub mod model;
pub mod persist;
pub mod predictor;
pub mod sequence;
pub mod text;
pub mod train;

pub use config::{AcousticConfig, AttentionKind, PredictorConfig};
pub use model::{AcousticModel, AcousticOutput, AcousticSteps};
pub use persist::{
    acoustic_from_checkpoint, acoustic_to_checkpoint, predictor_from_checkpoint, predictor_to_checkpoint, AcousticMeta, PredictorMeta,
    ACOUSTIC_STAGE, PREDICTOR_STAGE,
};
pub use predictor::{positional_encoding, FftBlock, StylePredictor};
pub use sequence::{combine, CombinedSequence, StyleEmbeddingSequence, TextEmbeddingSequence};
pub use text::{phone_indices, TextEncoder};
pub use train::{
    build_predictor_pairs, guided_attention_weights, pairs_from_prepared, predict_style, predictor_objective, prepare_utterances,
    train_style_predictor, train_utterance_level, utterance_objective, utterance_style_sequence, PredictorPair, PredictorReport,
    PreparedUtterances, UtteranceData, UtteranceLosses, UtteranceObjective, UtteranceTrainReport, UtteranceTrainer,
};
