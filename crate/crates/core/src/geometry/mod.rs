//! Keyboard geometry and the geometric rule annotator.

mod keyboard;
mod pose;
mod rule;

pub use keyboard::{is_black_key, GeometryConstants, KeyBox, KeyboardGeometry, KEY0_PITCH};
pub use pose::{HandPoseTrack, Point3, PoseFrame, NUM_TIPS};
pub use rule::{
    annotate_piece, candidate_tips, choose_tip, in_depth_range, in_pitch_range, near_surface,
    rule_labels, score_tip, RuleChoice, RuleConfig,
};
