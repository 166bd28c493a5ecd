//! Diagnostic probe: note features, the causal encoder and its training.

pub mod config;
pub mod features;
pub mod gradcheck;
pub mod io;
pub mod model;
pub mod tensor;
pub mod train;

pub use config::{ProbeConfig, RuleEmbeddingMode};
pub use features::{
    encode_note, encode_note_at, group_onsets, inference_sequence, training_pair, NoteFeatures,
    PieceSequence, SequenceNote, Window, FEATURE_DIM,
};
pub use gradcheck::{grad_check, CheckScope, GradCheckReport, TensorCheck};
pub use io::{content_id, ProbeModel, TrainingManifest};
pub use model::{param_count, NoteOutput, Params};
pub use train::{predict, train, train_with, EpochLoss, TrainReport};
