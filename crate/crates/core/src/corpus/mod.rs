//! Canonical data types and file formats for paired fingering corpora.

mod align;
mod label;
pub mod smf;
mod stats;
mod status;
mod time;
mod track;

pub use align::{align_notes, align_tracks, AlignedPair, ONSET_TOLERANCE};
pub use label::{FingerLabel, Hand, NUM_CLASSES};
pub use smf::{parse_smf, parse_smf_bytes};
pub use stats::{agreement_stats, AgreementStats};
pub use status::{
    load_status, save_status, update_review_stage, ProbeRun, ReviewStage, ReviewStatus,
    StageState,
};
pub use time::Timestamp;
pub use track::{
    load_track, parse_track, read_json, save_track, validate_notes, write_atomic, write_json,
    FingeringTrack, NoteList, NoteRecord, TrackKind, NUM_KEYS,
};

