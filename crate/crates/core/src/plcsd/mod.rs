//! Phone-level content/style disentanglement: two segment encoders, an
//! autoregressive segment decoder, two phone classifiers and a segment
//! discriminator, trained jointly by a six-sub-step alternating schedule.

pub mod check;
pub mod config;
pub mod losses;
pub mod model;
pub mod persist;
pub mod train;

pub use config::PlcsdConfig;
pub use losses::{
    auto_loss, build_objective, content_class_loss, contrast_loss, seg_adv_dis_loss, seg_adv_gen_loss,
    style_adv_dis_loss, style_adv_gen_loss, BuiltObjective, Objective, LOSS_NAMES, PROB_EPS,
};
pub use model::{
    ContentEmbedding, FreeRunOutput, Group, PhonePosterior, PlcsdModel, SegmentBatch, SegmentData, StyleEmbedding,
};
pub use train::{
    prepare_segments, train, untouched_groups, EpochSummary, FitReport, NoObserver, StepReport, TrainObserver,
    Trainer, SUB_STEPS,
};
