//! Onset-frame rule annotator.
//!
//! At each note's onset frame every fingertip is tested against the key's
//! box: inside the pitch extent (widened by `x_tolerance_mm`), inside the
//! front-back extent, and within `z_threshold_mm` of the key surface. The
//! passing tip with the lowest score labels the whole note; when no tip
//! passes, the note is labeled missing.

use serde::{Deserialize, Serialize};

use super::keyboard::KeyboardGeometry;
use super::pose::{HandPoseTrack, Point3, PoseFrame, NUM_TIPS};
use crate::corpus::{FingerLabel, FingeringTrack, NoteRecord, Timestamp, TrackKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleConfig {
    pub x_tolerance_mm: f64,
    pub z_threshold_mm: f64,
    /// Weight of the normalized front-back term.
    pub fb_weight: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            x_tolerance_mm: 2.0,
            z_threshold_mm: 10.0,
            fb_weight: 1.0,
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.x_tolerance_mm) && ok(self.z_threshold_mm) && ok(self.fb_weight) {
            Ok(())
        } else {
            Err(Error::Config(format!("rule thresholds must be positive: {self:?}")))
        }
    }
}

pub fn in_pitch_range(tip: &Point3, key: u8, geo: &KeyboardGeometry, cfg: &RuleConfig) -> bool {
    let k = geo.key(key);
    tip[0] >= k.x_min - cfg.x_tolerance_mm && tip[0] <= k.x_max + cfg.x_tolerance_mm
}

pub fn in_depth_range(tip: &Point3, key: u8, geo: &KeyboardGeometry) -> bool {
    let k = geo.key(key);
    tip[1] >= k.y_min && tip[1] <= k.y_max
}

pub fn near_surface(tip: &Point3, key: u8, geo: &KeyboardGeometry, cfg: &RuleConfig) -> bool {
    (tip[2] - geo.key(key).surface_z).abs() <= cfg.z_threshold_mm
}

/// Tip indices (ascending) that pass all three filters for `key`.
pub fn candidate_tips(
    frame: &PoseFrame,
    key: u8,
    geo: &KeyboardGeometry,
    cfg: &RuleConfig,
) -> Vec<usize> {
    (0..NUM_TIPS)
        .filter(|&t| {
            let tip = &frame[t];
            in_pitch_range(tip, key, geo, cfg)
                && in_depth_range(tip, key, geo)
                && near_surface(tip, key, geo, cfg)
        })
        .collect()
}

/// Height distance over the z threshold plus `fb_weight` times the
/// front-back distance from the key centre over half the key depth.
pub fn score_tip(tip: &Point3, key: u8, geo: &KeyboardGeometry, cfg: &RuleConfig) -> f64 {
    let k = geo.key(key);
    (tip[2] - k.surface_z).abs() / cfg.z_threshold_mm
        + cfg.fb_weight * (tip[1] - k.y_center()).abs() / k.y_half_length()
}

/// The annotator's choice for one key in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleChoice {
    pub tip: usize,
    pub score: f64,
    /// Another candidate had exactly the same score.
    pub score_tie: bool,
}

impl RuleChoice {
    pub fn label(&self) -> FingerLabel {
        FingerLabel::from_tip(self.tip)
    }
}

/// Minimum-score candidate; ties go to the smaller `|x - x_center|`, then to
/// the lower tip index.
pub fn choose_tip(
    frame: &PoseFrame,
    key: u8,
    geo: &KeyboardGeometry,
    cfg: &RuleConfig,
) -> Option<RuleChoice> {
    let xc = geo.key(key).x_center();
    let scored: Vec<(f64, f64, usize)> = candidate_tips(frame, key, geo, cfg)
        .into_iter()
        .map(|t| (score_tip(&frame[t], key, geo, cfg), (frame[t][0] - xc).abs(), t))
        .collect();
    let best = scored.iter().copied().min_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
    })?;
    let score_tie = scored.iter().filter(|s| s.0 == best.0).count() > 1;
    Some(RuleChoice {
        tip: best.2,
        score: best.0,
        score_tie,
    })
}

/// Labels each note from the pose frame at its onset.
pub fn rule_labels(
    notes: &[NoteRecord],
    poses: &HandPoseTrack,
    geo: &KeyboardGeometry,
    cfg: &RuleConfig,
) -> Result<Vec<NoteRecord>> {
    cfg.validate()?;
    notes
        .iter()
        .map(|note| {
            let frame = poses.frame(note.onset_frame)?;
            let label = choose_tip(frame, note.key_index, geo, cfg)
                .map_or(FingerLabel::MISSING, |c| c.label());
            Ok(note.with_label(label))
        })
        .collect()
}

/// Builds the rule track for a piece.
pub fn annotate_piece(
    notes: &[NoteRecord],
    poses: &HandPoseTrack,
    geo: &KeyboardGeometry,
    cfg: &RuleConfig,
    produced_at: Timestamp,
) -> Result<FingeringTrack> {
    let labeled = rule_labels(notes, poses, geo, cfg)?;
    FingeringTrack::new(
        poses.piece_id.clone(),
        TrackKind::Rule,
        poses.frame_rate_hz,
        produced_at,
        labeled,
    )
}
