//! The 77-d note feature vector and per-piece note sequences.
//!
//! Layout (frozen; changing it breaks saved models):
//!
//! | dims    | content |
//! |---------|---------|
//! | 0–4     | key index / 87, black-key flag, key-centre x / keyboard span, key-centre y / white-key length, surface z / 100 mm |
//! | 5–64    | per fingertip L1..R5: Δx / white-key width clamped to ±4, Δy / white-key length, Δz / 100 mm (all to the key centre), z / 100 mm, in-pitch-range flag, in-depth-range flag |
//! | 65–66   | rule hand one-hot (left, right) |
//! | 67–71   | rule finger one-hot (thumb..pinky) |
//! | 72      | rule label missing |
//! | 73–76   | rule-vs-annotator flags: top-candidate hand match, top-candidate finger match, rule tip among candidates, top candidate score tie |

use std::ops::Range;

use crate::corpus::{
    align_tracks, FingerLabel, FingeringTrack, Hand, NoteRecord, ReviewStatus, NUM_KEYS,
};
use crate::error::{Error, Result};
use crate::geometry::{
    candidate_tips, choose_tip, in_depth_range, in_pitch_range, HandPoseTrack, KeyboardGeometry,
    PoseFrame, RuleConfig, NUM_TIPS,
};

pub const FEATURE_DIM: usize = 77;
pub const KEY_DIMS: Range<usize> = 0..5;
pub const TIP_DIMS: Range<usize> = 5..65;
pub const DESCRIPTOR_DIMS: Range<usize> = 65..77;
pub const PER_TIP: usize = 6;
const MISSING_DIM: usize = 72;
const Z_SCALE_MM: f64 = 100.0;
/// Horizontal offsets saturate here; tips further away are simply far.
pub const DX_CLAMP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoteFeatures(pub [f64; FEATURE_DIM]);

impl NoteFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn descriptors(&self) -> &[f64] {
        &self.0[DESCRIPTOR_DIMS]
    }

    pub fn tip(&self, tip: usize) -> &[f64] {
        let start = TIP_DIMS.start + tip * PER_TIP;
        &self.0[start..start + PER_TIP]
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Encodes one note given the pose frame at its onset and its rule label.
pub fn encode_note(
    note: &NoteRecord,
    rule_label: FingerLabel,
    frame: &PoseFrame,
    geo: &KeyboardGeometry,
    cfg: &RuleConfig,
) -> NoteFeatures {
    let mut f = [0.0; FEATURE_DIM];
    let key = note.key_index;
    let k = geo.key(key);
    let white_w = geo.constants.white_key_width_mm();
    let white_len = geo.constants.white_key_length_mm;
    let (xc, yc) = (k.x_center(), k.y_center());

    f[0] = f64::from(key) / f64::from(NUM_KEYS - 1);
    f[1] = flag(k.is_black);
    f[2] = (xc - geo.keys()[0].x_min) / geo.x_span();
    f[3] = yc / white_len;
    f[4] = k.surface_z / Z_SCALE_MM;

    for (t, tip) in frame.iter().enumerate() {
        let o = TIP_DIMS.start + t * PER_TIP;
        f[o] = ((tip[0] - xc) / white_w).clamp(-DX_CLAMP, DX_CLAMP);
        f[o + 1] = (tip[1] - yc) / white_len;
        f[o + 2] = (tip[2] - k.surface_z) / Z_SCALE_MM;
        f[o + 3] = tip[2] / Z_SCALE_MM;
        f[o + 4] = flag(in_pitch_range(tip, key, geo, cfg));
        f[o + 5] = flag(in_depth_range(tip, key, geo));
    }

    match (rule_label.hand(), rule_label.finger(), rule_label.tip()) {
        (Some(hand), Some(finger), Some(rule_tip)) => {
            f[65] = flag(hand == Hand::Left);
            f[66] = flag(hand == Hand::Right);
            f[66 + finger as usize] = 1.0;
            if let Some(top) = choose_tip(frame, key, geo, cfg) {
                let top_label = top.label();
                f[73] = flag(top_label.hand() == Some(hand));
                f[74] = flag(top_label.finger() == Some(finger));
                f[76] = flag(top.score_tie);
            }
            f[75] = flag(candidate_tips(frame, key, geo, cfg).contains(&rule_tip));
        }
        _ => f[MISSING_DIM] = 1.0,
    }
    debug_assert_eq!(frame.len(), NUM_TIPS);
    NoteFeatures(f)
}

/// [`encode_note`] reading the onset frame from a pose track.
pub fn encode_note_at(
    note: &NoteRecord,
    rule_label: FingerLabel,
    poses: &HandPoseTrack,
    geo: &KeyboardGeometry,
    cfg: &RuleConfig,
) -> Result<NoteFeatures> {
    Ok(encode_note(note, rule_label, poses.frame(note.onset_frame)?, geo, cfg))
}

/// Partitions sorted notes into runs sharing one onset frame.
pub fn group_onsets(notes: &[NoteRecord]) -> Vec<Range<usize>> {
    let onsets: Vec<u32> = notes.iter().map(|n| n.onset_frame).collect();
    group_by_onset(&onsets)
}

pub(crate) fn group_by_onset(onsets: &[u32]) -> Vec<Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=onsets.len() {
        if i == onsets.len() || onsets[i] != onsets[start] {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceNote {
    pub note_id: String,
    pub onset_frame: u32,
    pub features: NoteFeatures,
    pub rule: FingerLabel,
    /// Reference label, present for training pairs.
    pub target: Option<FingerLabel>,
}

impl SequenceNote {
    /// `1[rule != target]`.
    pub fn needs_correction(&self) -> Option<bool> {
        self.target.map(|t| t != self.rule)
    }
}

/// Notes of one piece in onset order, ready for windowing.
#[derive(Debug, Clone, PartialEq)]
pub struct PieceSequence {
    pub piece_id: String,
    pub notes: Vec<SequenceNote>,
}

/// Consecutive onset groups fed to the encoder together.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub features: Vec<NoteFeatures>,
    pub rules: Vec<FingerLabel>,
    pub targets: Option<Vec<FingerLabel>>,
    /// Ranges into the per-note vectors, one per onset group.
    pub groups: Vec<Range<usize>>,
}

impl Window {
    pub fn num_notes(&self) -> usize {
        self.features.len()
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Group index of every note.
    pub fn group_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_notes()];
        for (g, r) in self.groups.iter().enumerate() {
            for n in r.clone() {
                out[n] = g;
            }
        }
        out
    }
}

impl PieceSequence {
    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    /// Splits the piece into non-overlapping windows of at most
    /// `context_window` onset groups.
    pub fn windows(&self, context_window: usize) -> Vec<Window> {
        let onsets: Vec<u32> = self.notes.iter().map(|n| n.onset_frame).collect();
        let groups = group_by_onset(&onsets);
        let with_targets = self.notes.iter().all(|n| n.target.is_some());
        groups
            .chunks(context_window.max(1))
            .map(|chunk| {
                let start = chunk[0].start;
                let end = chunk[chunk.len() - 1].end;
                let notes = &self.notes[start..end];
                Window {
                    features: notes.iter().map(|n| n.features).collect(),
                    rules: notes.iter().map(|n| n.rule).collect(),
                    targets: with_targets
                        .then(|| notes.iter().map(|n| n.target.expect("checked")).collect()),
                    groups: chunk.iter().map(|r| r.start - start..r.end - start).collect(),
                }
            })
            .collect()
    }
}

/// Builds the training sequence of one reviewed piece: edited notes, each
/// with the rule label aligned to it. Only pieces with R1 done are admitted.
pub fn training_pair(
    edited: &FingeringTrack,
    rule: &FingeringTrack,
    poses: &HandPoseTrack,
    status: &ReviewStatus,
    geo: &KeyboardGeometry,
    cfg: &RuleConfig,
) -> Result<PieceSequence> {
    if !status.r1.done {
        return Err(Error::Validation(format!(
            "piece {} has not passed R1 review",
            edited.piece_id
        )));
    }
    if status.piece_id != edited.piece_id {
        return Err(Error::Validation(format!(
            "status for {} used with piece {}",
            status.piece_id, edited.piece_id
        )));
    }
    let pairs = align_tracks(edited, rule)?;
    let notes = pairs
        .into_iter()
        .map(|p| {
            let features = encode_note_at(&p.reference, p.other_label, poses, geo, cfg)?;
            Ok(SequenceNote {
                note_id: p.reference.note_id.clone(),
                onset_frame: p.reference.onset_frame,
                features,
                rule: p.other_label,
                target: Some(p.reference.label),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PieceSequence {
        piece_id: edited.piece_id.clone(),
        notes,
    })
}

/// Sequence over the rule track's own notes, for inference.
pub fn inference_sequence(
    rule: &FingeringTrack,
    poses: &HandPoseTrack,
    geo: &KeyboardGeometry,
    cfg: &RuleConfig,
) -> Result<PieceSequence> {
    let notes = rule
        .notes
        .iter()
        .map(|n| {
            Ok(SequenceNote {
                note_id: n.note_id.clone(),
                onset_frame: n.onset_frame,
                features: encode_note_at(n, n.label, poses, geo, cfg)?,
                rule: n.label,
                target: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PieceSequence {
        piece_id: rule.piece_id.clone(),
        notes,
    })
}
