//! Note-level alignment of a reference (edited) track with a rule or probe
//! track.
//!
//! Matching runs in two passes. Notes whose `note_id` appears in both tracks
//! are paired first. The rest are paired on equal `key_index` with onsets at
//! most [`ONSET_TOLERANCE`] frames apart; candidate pairs are accepted
//! greedily by onset distance, then by earliest reference onset, then by
//! earliest other onset, so each other-track note is used at most once.
//! Reference notes left over carry the missing label.

use std::collections::HashMap;

use super::label::FingerLabel;
use super::track::{FingeringTrack, NoteRecord};
use crate::error::{Error, Result};

/// Maximum onset distance, in frames, for a positional match.
pub const ONSET_TOLERANCE: u32 = 2;

/// One reference note and the label the other track gives it.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub reference: NoteRecord,
    pub other_label: FingerLabel,
    /// Index of the matched note in the other track's `notes`.
    pub matched: Option<usize>,
}

impl AlignedPair {
    pub fn agrees(&self) -> bool {
        self.reference.label == self.other_label
    }
}

pub fn align_tracks(reference: &FingeringTrack, other: &FingeringTrack) -> Result<Vec<AlignedPair>> {
    if reference.piece_id != other.piece_id {
        return Err(Error::Alignment(format!(
            "piece {} cannot be aligned with piece {}",
            reference.piece_id, other.piece_id
        )));
    }
    if reference.frame_rate_hz != other.frame_rate_hz {
        return Err(Error::Alignment(format!(
            "frame rates differ for {}: {} vs {}",
            reference.piece_id, reference.frame_rate_hz, other.frame_rate_hz
        )));
    }
    Ok(align_notes(&reference.notes, &other.notes))
}

/// Alignment over bare note lists; [`align_tracks`] adds the piece checks.
pub fn align_notes(reference: &[NoteRecord], other: &[NoteRecord]) -> Vec<AlignedPair> {
    let mut matched: Vec<Option<usize>> = vec![None; reference.len()];
    let mut used = vec![false; other.len()];

    let by_id: HashMap<&str, usize> = other
        .iter()
        .enumerate()
        .map(|(i, n)| (n.note_id.as_str(), i))
        .collect();
    for (r, note) in reference.iter().enumerate() {
        if let Some(&o) = by_id.get(note.note_id.as_str()) {
            if !used[o] {
                used[o] = true;
                matched[r] = Some(o);
            }
        }
    }

    let mut by_key: HashMap<u8, Vec<usize>> = HashMap::new();
    for (o, note) in other.iter().enumerate() {
        if !used[o] {
            by_key.entry(note.key_index).or_default().push(o);
        }
    }
    let mut candidates: Vec<(u32, u32, u32, usize, usize)> = Vec::new();
    for (r, note) in reference.iter().enumerate() {
        if matched[r].is_some() {
            continue;
        }
        let Some(others) = by_key.get(&note.key_index) else {
            continue;
        };
        for &o in others {
            let dist = note.onset_frame.abs_diff(other[o].onset_frame);
            if dist <= ONSET_TOLERANCE {
                candidates.push((dist, note.onset_frame, other[o].onset_frame, r, o));
            }
        }
    }
    candidates.sort_unstable();
    for (_, _, _, r, o) in candidates {
        if matched[r].is_none() && !used[o] {
            used[o] = true;
            matched[r] = Some(o);
        }
    }

    reference
        .iter()
        .zip(matched)
        .map(|(note, m)| AlignedPair {
            reference: note.clone(),
            other_label: m.map_or(FingerLabel::MISSING, |o| other[o].label),
            matched: m,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Timestamp, TrackKind};

    fn note(id: &str, key: u8, on: u32, label: u8) -> NoteRecord {
        NoteRecord::new(id, key, on, on + 4, FingerLabel::new(label).unwrap())
    }

    fn track(kind: TrackKind, notes: Vec<NoteRecord>) -> FingeringTrack {
        FingeringTrack::new("p", kind, 30.0, Timestamp::from_millis(0), notes).unwrap()
    }

    #[test]
    fn identical_tracks_agree_everywhere() {
        let notes = vec![note("a", 10, 0, 2), note("b", 12, 3, 3), note("c", 50, 3, 8)];
        let e = track(TrackKind::Edited, notes.clone());
        let r = track(TrackKind::Rule, notes);
        let pairs = align_tracks(&e, &r).unwrap();
        assert_eq!(pairs.len(), 3);
        assert!(pairs.iter().all(AlignedPair::agrees));
    }

    #[test]
    fn extra_edited_note_gets_missing_label() {
        let e = track(TrackKind::Edited, vec![note("a", 10, 0, 2), note("x", 20, 5, 3)]);
        let r = track(TrackKind::Rule, vec![note("a", 10, 0, 2)]);
        let pairs = align_tracks(&e, &r).unwrap();
        assert_eq!(pairs[1].other_label, FingerLabel::MISSING);
        assert_eq!(pairs[1].matched, None);
    }

    #[test]
    fn piece_mismatch_is_an_error() {
        let e = track(TrackKind::Edited, vec![]);
        let mut r = track(TrackKind::Rule, vec![]);
        r.piece_id = "q".into();
        assert!(matches!(align_tracks(&e, &r), Err(Error::Alignment(_))));
    }

    /// Exhaustive check of the positional window: a single other note at
    /// every shift in -4..=4 is matched exactly when |shift| <= 2.
    #[test]
    fn onset_window_exhaustive() {
        for shift in -4i32..=4 {
            let reference = [note("r", 30, 10, 4)];
            let other = [note("o", 30, (10 + shift) as u32, 4)];
            let pairs = align_notes(&reference, &other);
            let expect = shift.unsigned_abs() <= ONSET_TOLERANCE;
            assert_eq!(pairs[0].matched.is_some(), expect, "shift {shift}");
            // Same shift on a different key never matches.
            let other = [note("o", 31, (10 + shift) as u32, 4)];
            assert!(align_notes(&reference, &other)[0].matched.is_none());
        }
    }

    #[test]
    fn closest_onset_wins_then_earliest() {
        // Two reference notes compete for one other note at frame 11.
        let reference = [note("r1", 30, 10, 1), note("r2", 30, 12, 2)];
        let other = [note("o", 30, 11, 1)];
        let pairs = align_notes(&reference, &other);
        assert_eq!(pairs[0].matched, Some(0));
        assert_eq!(pairs[1].matched, None);

        // Closer reference wins even when it comes later.
        let reference = [note("r1", 30, 9, 1), note("r2", 30, 12, 2)];
        let pairs = align_notes(&reference, &other);
        assert_eq!(pairs[0].matched, None);
        assert_eq!(pairs[1].matched, Some(0));
    }

    #[test]
    fn id_match_takes_precedence() {
        let reference = [note("a", 30, 10, 1), note("b", 30, 11, 2)];
        let other = [note("b", 30, 11, 2), note("z", 30, 10, 4)];
        let pairs = align_notes(&reference, &other);
        assert_eq!(pairs[1].matched, Some(0));
        assert_eq!(pairs[0].matched, Some(1));
        assert_eq!(pairs[0].other_label.class_id(), 4);
    }
}
