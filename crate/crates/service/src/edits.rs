//! Edit operations on an edited track, and the log they are recorded in.

use serde::{Deserialize, Serialize};

use fingerlab::corpus::{FingerLabel, FingeringTrack, NoteRecord, Timestamp};

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditAction {
    SetLabel,
    AddNote,
    DeleteNote,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditScope {
    #[default]
    WholeNote,
    FromFrame,
}

/// One annotator action. Existing notes are selected by `note_id`; new
/// notes by `key` and `frame` (their onset).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOp {
    pub piece_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<u32>,
    /// Offset of an added note; defaults to one frame after the onset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<u32>,
    pub action: EditAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<FingerLabel>,
    #[serde(default)]
    pub scope: EditScope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_frame: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_ts: Option<Timestamp>,
    /// Track version the client last saw; checked when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_version: Option<u64>,
}

impl EditOp {
    pub fn set_label(piece_id: &str, note_id: &str, label: FingerLabel) -> Self {
        EditOp {
            piece_id: piece_id.to_string(),
            note_id: Some(note_id.to_string()),
            key: None,
            frame: None,
            offset: None,
            action: EditAction::SetLabel,
            label: Some(label),
            scope: EditScope::WholeNote,
            from_frame: None,
            client_ts: None,
            base_version: None,
        }
    }

    pub fn set_label_from(piece_id: &str, note_id: &str, label: FingerLabel, from_frame: u32) -> Self {
        EditOp {
            scope: EditScope::FromFrame,
            from_frame: Some(from_frame),
            ..Self::set_label(piece_id, note_id, label)
        }
    }

    pub fn add_note(piece_id: &str, key: u8, onset: u32, offset: u32, label: FingerLabel) -> Self {
        EditOp {
            note_id: None,
            key: Some(key),
            frame: Some(onset),
            offset: Some(offset),
            action: EditAction::AddNote,
            ..Self::set_label(piece_id, "", label)
        }
    }

    pub fn delete_note(piece_id: &str, note_id: &str) -> Self {
        EditOp {
            action: EditAction::DeleteNote,
            label: None,
            ..Self::set_label(piece_id, note_id, FingerLabel::MISSING)
        }
    }

    /// Id given to a note created by this op.
    pub fn added_note_id(key: u8, onset: u32) -> String {
        format!("add-{key}-{onset}")
    }
}

pub fn split_note_id(note_id: &str, frame: u32) -> String {
    format!("{note_id}~{frame}")
}

fn required<T: Copy>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| ServiceError::BadRequest(format!("{what} is required")))
}

fn find(track: &FingeringTrack, op: &EditOp) -> Result<usize> {
    let id = op
        .note_id
        .as_deref()
        .ok_or_else(|| ServiceError::BadRequest("note_id is required".into()))?;
    track
        .find(id)
        .ok_or_else(|| ServiceError::NotFound(format!("note {id}")))
}

fn check_collision(track: &FingeringTrack, key: u8, onset: u32) -> Result<()> {
    match track.notes.iter().find(|n| n.key_index == key && n.onset_frame == onset) {
        Some(n) => Err(ServiceError::Collision {
            key,
            onset,
            existing: n.note_id.clone(),
        }),
        None => Ok(()),
    }
}

/// Applies `op` to a copy of `track`. Returns the new track and the ids of
/// the notes the op touched.
pub fn apply_op(track: &FingeringTrack, op: &EditOp) -> Result<(FingeringTrack, Vec<String>)> {
    if op.piece_id != track.piece_id {
        return Err(ServiceError::BadRequest(format!(
            "edit for {} sent to piece {}",
            op.piece_id, track.piece_id
        )));
    }
    let mut out = track.clone();
    let touched = match op.action {
        EditAction::SetLabel => {
            let label = required(op.label, "label")?;
            let i = find(track, op)?;
            let note = &track.notes[i];
            match (op.scope, op.from_frame) {
                (EditScope::WholeNote, _) => {
                    out.notes[i].label = label;
                    vec![note.note_id.clone()]
                }
                (EditScope::FromFrame, None) => {
                    return Err(ServiceError::BadRequest("from_frame is required".into()))
                }
                (EditScope::FromFrame, Some(f)) if f == note.onset_frame => {
                    out.notes[i].label = label;
                    vec![note.note_id.clone()]
                }
                (EditScope::FromFrame, Some(f)) => {
                    if f < note.onset_frame || f >= note.offset_frame {
                        return Err(ServiceError::BadRequest(format!(
                            "frame {f} outside note {} [{}, {})",
                            note.note_id, note.onset_frame, note.offset_frame
                        )));
                    }
                    check_collision(track, note.key_index, f)?;
                    let tail_id = split_note_id(&note.note_id, f);
                    if track.find(&tail_id).is_some() {
                        return Err(ServiceError::BadRequest(format!("note {tail_id} already exists")));
                    }
                    out.notes[i].offset_frame = f;
                    out.notes.push(NoteRecord::new(
                        tail_id.clone(),
                        note.key_index,
                        f,
                        note.offset_frame,
                        label,
                    ));
                    vec![note.note_id.clone(), tail_id]
                }
            }
        }
        EditAction::AddNote => {
            let label = required(op.label, "label")?;
            let key = required(op.key, "key")?;
            let onset = required(op.frame, "frame")?;
            let offset = op.offset.unwrap_or(onset + 1);
            check_collision(track, key, onset)?;
            let id = EditOp::added_note_id(key, onset);
            if track.find(&id).is_some() {
                return Err(ServiceError::BadRequest(format!("note {id} already exists")));
            }
            out.notes.push(NoteRecord::new(id.clone(), key, onset, offset, label));
            vec![id]
        }
        EditAction::DeleteNote => {
            let i = find(track, op)?;
            vec![out.notes.remove(i).note_id]
        }
    };
    out.sort_notes();
    out.validate()?;
    Ok((out, touched))
}

/// A committed op as stored in the append-only log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Track version after this op; the first op yields version 1.
    pub version: u64,
    pub applied_at: Timestamp,
    pub op: EditOp,
    pub touched: Vec<String>,
}

/// Applies a committed entry. The track's `produced_at` becomes the entry's
/// commit time, so replay is exact.
pub fn apply_entry(track: &FingeringTrack, entry: &LogEntry) -> Result<FingeringTrack> {
    let (mut out, _) = apply_op(track, &entry.op)?;
    out.produced_at = entry.applied_at;
    Ok(out)
}

/// Rebuilds a track from its base and log.
pub fn replay(base: &FingeringTrack, entries: &[LogEntry]) -> Result<FingeringTrack> {
    let mut track = base.clone();
    for (i, e) in entries.iter().enumerate() {
        if e.version != i as u64 + 1 {
            return Err(ServiceError::BadRequest(format!(
                "log entry {i} has version {}",
                e.version
            )));
        }
        track = apply_entry(&track, e)?;
    }
    Ok(track)
}
