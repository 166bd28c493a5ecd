//! Fingering annotation toolkit.
//!
//! The crate covers the whole annotation loop over 3D fingertip trajectories:
//!
//! - [`corpus`]: note records, paired fingering tracks, review status files,
//!   track alignment, agreement statistics and Standard MIDI File ingestion.
//! - [`geometry`]: the keyboard model and the onset-frame rule annotator.
//! - [`synth`]: a ground-truth performance generator with controlled
//!   corruptions, used as an oracle for everything downstream.
//! - [`probe`]: the 77-d note features and a small causal Transformer with
//!   hand-written backpropagation, trained on (rule, edited) pairs.
//! - [`gate`]: the confidence gate that lets the probe override rule labels,
//!   plus flag precision/recall, break rate, threshold sweeps, bootstrap and
//!   Student-t intervals and the label-vintage audit.

pub mod corpus;
pub mod error;
pub mod gate;
pub mod geometry;
pub mod probe;
pub mod synth;

pub use corpus::{
    AgreementStats, AlignedPair, FingerLabel, FingeringTrack, Hand, NoteRecord, ReviewStage,
    ReviewStatus, Timestamp, TrackKind,
};
pub use error::{Error, Result};
pub use gate::{ClassDistribution, EvalReport, GateConfig, GateDecision};
pub use geometry::{HandPoseTrack, KeyboardGeometry, RuleConfig};
pub use probe::{NoteFeatures, ProbeConfig, ProbeModel, RuleEmbeddingMode};
pub use synth::SynthConfig;
