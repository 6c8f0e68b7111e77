//! Corpus ingestion: phone inventory, log-mel analysis, alignments,
//! segmentation into phone segments, dataset splits and the synthetic corpus.

pub mod alignment;
pub mod inventory;
pub mod manifest;
pub mod mel;
pub mod segment;
pub mod synthetic;
pub mod wav;

pub use alignment::{load_alignment, save_alignment, AlignmentEntry, AlignmentFile};
pub use inventory::PhoneInventory;
pub use manifest::{load_manifest, load_utterance, save_manifest, ManifestRecord};
pub use mel::{compute_mel, hann_window, MelAnalyzer, MelConfig, MelFilterbank, MelSpectrogram};
pub use segment::{segment_utterance, split_dataset, PhoneSegment, SilenceLabels, Utterance};
pub use synthetic::{make_synthetic_corpus, SyntheticConfig, SyntheticCorpus, SyntheticGenerator, SyntheticUtterance};
pub use wav::{read_wav, write_wav};
