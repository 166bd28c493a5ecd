use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::label::FingerLabel;
use super::time::Timestamp;
use crate::error::{Error, Result};

/// Number of keys on the keyboard (A0..C8).
pub const NUM_KEYS: u8 = 88;

/// One note event on the motion-frame grid. Frames are half-open:
/// the note sounds over `[onset_frame, offset_frame)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoteRecord {
    pub note_id: String,
    #[serde(rename = "key")]
    pub key_index: u8,
    #[serde(rename = "onset")]
    pub onset_frame: u32,
    #[serde(rename = "offset")]
    pub offset_frame: u32,
    pub label: FingerLabel,
}

impl NoteRecord {
    pub fn new(
        note_id: impl Into<String>,
        key_index: u8,
        onset_frame: u32,
        offset_frame: u32,
        label: FingerLabel,
    ) -> Self {
        NoteRecord {
            note_id: note_id.into(),
            key_index,
            onset_frame,
            offset_frame,
            label,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.key_index >= NUM_KEYS {
            return Err(Error::Validation(format!(
                "note {}: key {} outside 0..{}",
                self.note_id, self.key_index, NUM_KEYS
            )));
        }
        if self.offset_frame <= self.onset_frame {
            return Err(Error::Validation(format!(
                "note {}: offset {} not after onset {}",
                self.note_id, self.offset_frame, self.onset_frame
            )));
        }
        Ok(())
    }

    pub fn with_label(&self, label: FingerLabel) -> Self {
        NoteRecord {
            label,
            ..self.clone()
        }
    }

    /// Sort key: onset frame, then key index.
    pub fn order_key(&self) -> (u32, u8) {
        (self.onset_frame, self.key_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackKind {
    Rule,
    Edited,
    Probe,
}

impl TrackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackKind::Rule => "rule",
            TrackKind::Edited => "edited",
            TrackKind::Probe => "probe",
        }
    }
}

impl fmt::Display for TrackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TrackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rule" => Ok(TrackKind::Rule),
            "edited" => Ok(TrackKind::Edited),
            "probe" => Ok(TrackKind::Probe),
            other => Err(Error::Validation(format!("unknown track kind {other:?}"))),
        }
    }
}

/// Ordered note records of one kind for one piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingeringTrack {
    pub piece_id: String,
    pub kind: TrackKind,
    pub frame_rate_hz: f64,
    pub produced_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    pub notes: Vec<NoteRecord>,
}

impl FingeringTrack {
    /// Builds a track, sorting the notes and checking every invariant.
    pub fn new(
        piece_id: impl Into<String>,
        kind: TrackKind,
        frame_rate_hz: f64,
        produced_at: Timestamp,
        notes: Vec<NoteRecord>,
    ) -> Result<Self> {
        let mut track = FingeringTrack {
            piece_id: piece_id.into(),
            kind,
            frame_rate_hz,
            produced_at,
            model_id: None,
            notes,
        };
        track.sort_notes();
        track.validate()?;
        Ok(track)
    }

    pub fn with_model_id(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = Some(model_id.into());
        self
    }

    pub fn sort_notes(&mut self) {
        self.notes.sort_by_key(NoteRecord::order_key);
    }

    pub fn validate(&self) -> Result<()> {
        validate_frame_rate(self.frame_rate_hz)?;
        validate_notes(&self.notes)?;
        if self.model_id.is_some() && self.kind != TrackKind::Probe {
            return Err(Error::Validation(format!(
                "{} track for {} carries a model_id",
                self.kind, self.piece_id
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    /// Number of notes with a non-missing label.
    pub fn labeled_count(&self) -> usize {
        self.notes.iter().filter(|n| !n.label.is_missing()).count()
    }

    pub fn max_offset(&self) -> Option<u32> {
        self.notes.iter().map(|n| n.offset_frame).max()
    }

    pub fn find(&self, note_id: &str) -> Option<usize> {
        self.notes.iter().position(|n| n.note_id == note_id)
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        to_json_bytes(self)
    }
}

pub(crate) fn validate_frame_rate(frame_rate_hz: f64) -> Result<()> {
    if frame_rate_hz.is_finite() && frame_rate_hz > 0.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "frame rate {frame_rate_hz} is not positive"
        )))
    }
}

/// Checks per-note invariants, sort order, and uniqueness of `(key, onset)`
/// and of note ids.
pub fn validate_notes(notes: &[NoteRecord]) -> Result<()> {
    let mut slots = HashSet::with_capacity(notes.len());
    let mut ids = HashSet::with_capacity(notes.len());
    for (i, note) in notes.iter().enumerate() {
        note.validate()?;
        if i > 0 && notes[i - 1].order_key() > note.order_key() {
            return Err(Error::Validation(format!(
                "notes out of order at index {i} (note {})",
                note.note_id
            )));
        }
        if !slots.insert((note.key_index, note.onset_frame)) {
            return Err(Error::Validation(format!(
                "duplicate (key {}, onset {}) at note {}",
                note.key_index, note.onset_frame, note.note_id
            )));
        }
        if !ids.insert(note.note_id.as_str()) {
            return Err(Error::Validation(format!(
                "duplicate note id {}",
                note.note_id
            )));
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct RawTrack {
    piece_id: String,
    kind: TrackKind,
    frame_rate_hz: f64,
    produced_at: Timestamp,
    #[serde(default)]
    model_id: Option<String>,
    notes: Vec<serde_json::Value>,
}

/// Reads and validates a fingering track file.
pub fn load_track(path: impl AsRef<Path>) -> Result<FingeringTrack> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_track(&bytes, &path.display().to_string())
}

/// Parses track JSON; `source` names the input in error messages.
pub fn parse_track(bytes: &[u8], source: &str) -> Result<FingeringTrack> {
    let raw: RawTrack = serde_json::from_slice(bytes).map_err(|e| Error::Format {
        context: source.to_string(),
        message: e.to_string(),
    })?;
    let notes = raw
        .notes
        .into_iter()
        .enumerate()
        .map(|(i, value)| {
            serde_json::from_value::<NoteRecord>(value).map_err(|e| Error::Format {
                context: format!("{source}: notes[{i}]"),
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut track = FingeringTrack {
        piece_id: raw.piece_id,
        kind: raw.kind,
        frame_rate_hz: raw.frame_rate_hz,
        produced_at: raw.produced_at,
        model_id: raw.model_id,
        notes,
    };
    track.sort_notes();
    track.validate()?;
    Ok(track)
}

pub fn save_track(track: &FingeringTrack, path: impl AsRef<Path>) -> Result<()> {
    track.validate()?;
    write_json(track, path)
}

pub(crate) fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Format {
        context: "serialize".into(),
        message: e.to_string(),
    })?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Serializes `value` as pretty JSON and replaces `path` atomically
/// (write to a sibling temp file, then rename).
pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_json_bytes(value)?;
    write_atomic(path, &bytes)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file_name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format {
        context: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Unlabeled note list for one piece, the input of the rule annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteList {
    pub piece_id: String,
    pub frame_rate_hz: f64,
    pub notes: Vec<NoteRecord>,
}

impl NoteList {
    pub fn validate(&self) -> Result<()> {
        validate_frame_rate(self.frame_rate_hz)?;
        validate_notes(&self.notes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn note(id: &str, key: u8, on: u32, off: u32, label: u8) -> NoteRecord {
        NoteRecord::new(id, key, on, off, FingerLabel::new(label).unwrap())
    }

    fn track(notes: Vec<NoteRecord>) -> FingeringTrack {
        FingeringTrack::new(
            "p",
            TrackKind::Rule,
            30.0,
            Timestamp::from_millis(0),
            notes,
        )
        .unwrap()
    }

    #[test]
    fn three_note_file_loads_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        let json = r#"{"piece_id":"p","kind":"rule","frame_rate_hz":30.0,
            "produced_at":"2024-01-01T00:00:00.000Z","notes":[
            {"note_id":"c","key":40,"onset":9,"offset":12,"label":7},
            {"note_id":"a","key":39,"onset":0,"offset":15,"label":6},
            {"note_id":"b","key":30,"onset":9,"offset":11,"label":2}]}"#;
        fs::write(&path, json).unwrap();
        let t = load_track(&path).unwrap();
        let ids: Vec<_> = t.notes.iter().map(|n| n.note_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn offset_not_after_onset_is_rejected() {
        let bytes = br#"{"piece_id":"p","kind":"rule","frame_rate_hz":30.0,
            "produced_at":"2024-01-01T00:00:00.000Z","notes":[
            {"note_id":"a","key":39,"onset":5,"offset":5,"label":6}]}"#;
        assert!(matches!(parse_track(bytes, "x"), Err(Error::Validation(_))));
    }

    #[test]
    fn duplicate_key_onset_is_rejected() {
        let bytes = br#"{"piece_id":"p","kind":"edited","frame_rate_hz":30.0,
            "produced_at":"2024-01-01T00:00:00.000Z","notes":[
            {"note_id":"a","key":39,"onset":5,"offset":8,"label":6},
            {"note_id":"b","key":39,"onset":5,"offset":9,"label":7}]}"#;
        assert!(matches!(parse_track(bytes, "x"), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_record_is_named() {
        let bytes = br#"{"piece_id":"p","kind":"rule","frame_rate_hz":30.0,
            "produced_at":"2024-01-01T00:00:00.000Z","notes":[
            {"note_id":"a","key":39,"onset":5,"offset":8,"label":6},
            {"note_id":"b","key":39,"onset":"x","offset":9,"label":7}]}"#;
        match parse_track(bytes, "f.json") {
            Err(Error::Format { context, .. }) => assert_eq!(context, "f.json: notes[1]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_and_probe_tracks_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let empty = track(vec![]);
        let p = dir.path().join("e.json");
        save_track(&empty, &p).unwrap();
        assert_eq!(load_track(&p).unwrap(), empty);

        let mut probe = track(vec![note("a", 1, 0, 3, 4)]).with_model_id("m-123");
        probe.kind = TrackKind::Probe;
        save_track(&probe, &p).unwrap();
        assert_eq!(load_track(&p).unwrap().model_id.as_deref(), Some("m-123"));
    }

    #[test]
    fn model_id_only_on_probe_tracks() {
        let t = track(vec![]).with_model_id("m");
        assert!(t.validate().is_err());
    }
}
