//! Synthetic performances with known fingering.
//!
//! Each hand rests over a contiguous five-key span and only moves while it is
//! silent. A sounding note has its finger's tip on the key centre from onset
//! to offset; every other tip hovers over its own key at
//! `hover_height_mm`. Gaussian tip noise is truncated at three standard
//! deviations.
//!
//! Corruptions are applied afterwards to the pose track so the ground truth
//! stays untouched:
//!
//! - *swap*: the playing tip and an idle adjacent tip of the same hand trade
//!   positions for the duration of the note, so the rule picks the neighbour;
//! - *drop*: the playing tip is lifted for the duration of the note and the
//!   note is removed from the rule annotator's input.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{FingerLabel, FingeringTrack, Hand, NoteRecord, Timestamp, TrackKind};
use crate::error::{Error, Result};
use crate::geometry::{annotate_piece, HandPoseTrack, KeyboardGeometry, PoseFrame, RuleConfig, NUM_TIPS};

const LEFT_BASE_RANGE: (u8, u8) = (8, 36);
const RIGHT_BASE_RANGE: (u8, u8) = (44, 78);
const FIRST_ONSET: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseMm {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_z: f64,
}

impl NoiseMm {
    pub fn isotropic(sigma: f64) -> Self {
        NoiseMm {
            sigma_x: sigma,
            sigma_y: sigma,
            sigma_z: sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_notes: usize,
    pub frame_rate_hz: f64,
    pub noise_mm: NoiseMm,
    pub p_swap: f64,
    pub p_drop: f64,
    pub hover_height_mm: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            num_notes: 200,
            frame_rate_hz: 30.0,
            noise_mm: NoiseMm::default(),
            p_swap: 0.0,
            p_drop: 0.0,
            hover_height_mm: 40.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let rate = |p: f64| (0.0..=1.0).contains(&p);
        if !rate(self.p_swap) || !rate(self.p_drop) {
            return Err(Error::Config("corruption rates must lie in [0, 1]".into()));
        }
        if self.num_notes == 0 {
            return Err(Error::Config("num_notes must be at least 1".into()));
        }
        let n = self.noise_mm;
        if [n.sigma_x, n.sigma_y, n.sigma_z].iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config("noise must be non-negative".into()));
        }
        if !(self.frame_rate_hz > 0.0 && self.hover_height_mm > 0.0) {
            return Err(Error::Config("frame rate and hover height must be positive".into()));
        }
        Ok(())
    }
}

/// Output of [`generate_piece`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPiece {
    /// Unlabeled notes, the rule annotator's input.
    pub notes: Vec<NoteRecord>,
    pub poses: HandPoseTrack,
    /// Ground-truth fingering.
    pub edited: FingeringTrack,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapRecord {
    pub note_id: String,
    pub true_label: FingerLabel,
    /// Label of the neighbour that took the true finger's place.
    pub shown_label: FingerLabel,
}

/// Which notes were corrupted and how.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionLedger {
    pub swapped: Vec<SwapRecord>,
    pub dropped: Vec<String>,
}

impl CorruptionLedger {
    pub fn total(&self) -> usize {
        self.swapped.len() + self.dropped.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedPiece {
    pub poses: HandPoseTrack,
    /// Notes still visible to the rule annotator.
    pub notes: Vec<NoteRecord>,
    pub ledger: CorruptionLedger,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Key under `finger` (1..=5) when the hand's span starts at `base`.
fn finger_key(hand: Hand, base: u8, finger: u8) -> u8 {
    match hand {
        Hand::Left => base + (5 - finger),
        Hand::Right => base + (finger - 1),
    }
}

fn hand_index(hand: Hand) -> usize {
    match hand {
        Hand::Left => 0,
        Hand::Right => 1,
    }
}

fn random_base(rng: &mut ChaCha8Rng, hand: Hand) -> u8 {
    let (lo, hi) = match hand {
        Hand::Left => LEFT_BASE_RANGE,
        Hand::Right => RIGHT_BASE_RANGE,
    };
    rng.random_range(lo..=hi)
}

struct Truncated {
    normal: Option<Normal<f64>>,
    limit: f64,
}

impl Truncated {
    fn new(sigma: f64) -> Self {
        Truncated {
            normal: (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma")),
            limit: 3.0 * sigma,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let Some(normal) = &self.normal else {
            return 0.0;
        };
        loop {
            let v = normal.sample(rng);
            if v.abs() <= self.limit {
                return v;
            }
        }
    }
}

/// Generates one piece. Pure in `(piece_id, cfg)`.
pub fn generate_piece(piece_id: &str, cfg: &SynthConfig) -> Result<SynthPiece> {
    cfg.validate()?;
    let geo = KeyboardGeometry::default();
    let mut rng = rng_for(cfg.seed, 0);

    let hands = [Hand::Left, Hand::Right];
    let mut placements: [Vec<(u32, u8)>; 2] = [
        vec![(0, random_base(&mut rng, Hand::Left))],
        vec![(0, random_base(&mut rng, Hand::Right))],
    ];
    let mut hand_free = [0u32; 2];
    let mut cursor = FIRST_ONSET;
    // (onset, key, offset, label)
    let mut raw: Vec<(u32, u8, u32, FingerLabel)> = Vec::with_capacity(cfg.num_notes);

    while raw.len() < cfg.num_notes {
        let hand = hands[rng.random_range(0..2)];
        let h = hand_index(hand);
        let onset = cursor.max(hand_free[h]);
        if rng.random_bool(0.25) {
            let base = random_base(&mut rng, hand);
            placements[h].push((onset, base));
        }
        let base = placements[h].last().expect("initial placement").1;
        let roll: f64 = rng.random();
        let chord = if roll < 0.75 { 1 } else if roll < 0.95 { 2 } else { 3 };
        let chord = chord.min(cfg.num_notes - raw.len());
        let duration = rng.random_range(3..=12u32);
        for idx in sample(&mut rng, 5, chord) {
            let finger = idx as u8 + 1;
            let label = FingerLabel::from_hand_finger(hand, finger)?;
            raw.push((onset, finger_key(hand, base, finger), onset + duration, label));
        }
        hand_free[h] = onset + duration;
        cursor = onset + rng.random_range(1..=6u32);
    }
    raw.sort_unstable_by_key(|&(onset, key, _, _)| (onset, key));

    let num_frames = raw.iter().map(|r| r.2).max().unwrap_or(0) as usize + 1;
    let noise = [
        Truncated::new(cfg.noise_mm.sigma_x),
        Truncated::new(cfg.noise_mm.sigma_y),
        Truncated::new(cfg.noise_mm.sigma_z),
    ];

    let mut frames: Vec<PoseFrame> = Vec::with_capacity(num_frames);
    let mut cursor_idx = [0usize; 2];
    for frame in 0..num_frames as u32 {
        let mut pose = [[0.0; 3]; NUM_TIPS];
        for hand in hands {
            let h = hand_index(hand);
            while cursor_idx[h] + 1 < placements[h].len() && placements[h][cursor_idx[h] + 1].0 <= frame {
                cursor_idx[h] += 1;
            }
            let base = placements[h][cursor_idx[h]].1;
            for finger in 1..=5u8 {
                let label = FingerLabel::from_hand_finger(hand, finger)?;
                let k = geo.key(finger_key(hand, base, finger));
                pose[label.tip().expect("non-missing")] =
                    [k.x_center(), k.y_center(), cfg.hover_height_mm];
            }
        }
        frames.push(pose);
    }
    for &(onset, key, offset, label) in &raw {
        let k = geo.key(key);
        let tip = label.tip().expect("non-missing");
        for frame in &mut frames[onset as usize..offset as usize] {
            frame[tip] = [k.x_center(), k.y_center(), k.surface_z];
        }
    }
    for pose in &mut frames {
        for tip in pose.iter_mut() {
            for (axis, n) in noise.iter().enumerate() {
                tip[axis] += n.sample(&mut rng);
            }
        }
    }

    let labeled: Vec<NoteRecord> = raw
        .iter()
        .enumerate()
        .map(|(i, &(onset, key, offset, label))| {
            NoteRecord::new(format!("n{i:05}"), key, onset, offset, label)
        })
        .collect();
    let notes = labeled.iter().map(|n| n.with_label(FingerLabel::MISSING)).collect();
    let edited = FingeringTrack::new(
        piece_id,
        TrackKind::Edited,
        cfg.frame_rate_hz,
        Timestamp::from_millis(0),
        labeled,
    )?;
    Ok(SynthPiece {
        notes,
        poses: HandPoseTrack {
            piece_id: piece_id.to_string(),
            frame_rate_hz: cfg.frame_rate_hz,
            frames,
        },
        edited,
    })
}

fn overlaps(a: (u32, u32), b: (u32, u32)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// Applies swap and drop corruptions to a generated piece. Pure in
/// `(piece, cfg)`; uses a random stream separate from generation.
pub fn inject_corruptions(piece: &SynthPiece, cfg: &SynthConfig) -> Result<CorruptedPiece> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, 1);
    let truth = &piece.edited.notes;

    // Busy intervals per tip: its own notes, plus any swap it takes part in.
    let mut busy: Vec<Vec<(u32, u32)>> = vec![Vec::new(); NUM_TIPS];
    for n in truth {
        busy[n.label.tip().expect("ground truth is labeled")].push((n.onset_frame, n.offset_frame));
    }

    let mut poses = piece.poses.clone();
    let mut ledger = CorruptionLedger::default();
    let mut dropped = vec![false; truth.len()];

    for (i, note) in truth.iter().enumerate() {
        let tip = note.label.tip().expect("ground truth is labeled");
        let span = (note.onset_frame, note.offset_frame);
        let range = span.0 as usize..span.1 as usize;
        if rng.random_bool(cfg.p_drop) {
            for frame in &mut poses.frames[range] {
                frame[tip][2] = cfg.hover_height_mm;
            }
            ledger.dropped.push(note.note_id.clone());
            dropped[i] = true;
            continue;
        }
        if !rng.random_bool(cfg.p_swap) {
            continue;
        }
        let hand_lo = if tip < 5 { 0 } else { 5 };
        let mut neighbours: Vec<usize> = [tip.wrapping_sub(1), tip + 1]
            .into_iter()
            .filter(|&t| (hand_lo..hand_lo + 5).contains(&t))
            .collect();
        if neighbours.len() == 2 && rng.random_bool(0.5) {
            neighbours.swap(0, 1);
        }
        let Some(partner) = neighbours
            .into_iter()
            .find(|&t| busy[t].iter().all(|&b| !overlaps(b, span)))
        else {
            continue;
        };
        busy[partner].push(span);
        for frame in &mut poses.frames[range] {
            frame.swap(tip, partner);
        }
        ledger.swapped.push(SwapRecord {
            note_id: note.note_id.clone(),
            true_label: note.label,
            shown_label: FingerLabel::from_tip(partner),
        });
    }

    let notes = piece
        .notes
        .iter()
        .zip(&dropped)
        .filter(|(_, &d)| !d)
        .map(|(n, _)| n.clone())
        .collect();
    Ok(CorruptedPiece {
        poses,
        notes,
        ledger,
    })
}

/// One generated piece with its corruptions applied.
#[derive(Debug, Clone)]
pub struct CorpusPiece {
    pub piece_id: String,
    pub config: SynthConfig,
    pub truth: SynthPiece,
    pub corrupted: CorruptedPiece,
}

impl CorpusPiece {
    /// Rule track over the corrupted poses.
    pub fn rule_track(&self, geo: &KeyboardGeometry, cfg: &RuleConfig) -> Result<FingeringTrack> {
        annotate_piece(
            &self.corrupted.notes,
            &self.corrupted.poses,
            geo,
            cfg,
            Timestamp::from_millis(0),
        )
    }
}

/// `count` pieces named `{prefix}-000`, ... with seeds `base.seed + i`.
pub fn generate_corpus(prefix: &str, base: &SynthConfig, count: usize) -> Result<Vec<CorpusPiece>> {
    (0..count)
        .map(|i| {
            let piece_id = format!("{prefix}-{i:03}");
            let config = SynthConfig {
                seed: base.seed.wrapping_add(i as u64),
                ..base.clone()
            };
            let truth = generate_piece(&piece_id, &config)?;
            let corrupted = inject_corruptions(&truth, &config)?;
            Ok(CorpusPiece {
                piece_id,
                config,
                truth,
                corrupted,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{agreement_stats, align_tracks};
    use crate::geometry::{annotate_piece, RuleConfig};

    fn rule_track(notes: &[NoteRecord], poses: &HandPoseTrack) -> FingeringTrack {
        annotate_piece(
            notes,
            poses,
            &KeyboardGeometry::default(),
            &RuleConfig::default(),
            Timestamp::from_millis(0),
        )
        .unwrap()
    }

    #[test]
    fn noise_free_piece_is_recovered_exactly() {
        for seed in 0..5 {
            let cfg = SynthConfig { seed, num_notes: 300, ..SynthConfig::default() };
            let piece = generate_piece("p", &cfg).unwrap();
            let rule = rule_track(&piece.notes, &piece.poses);
            let pairs = align_tracks(&piece.edited, &rule).unwrap();
            assert!(pairs.iter().all(|p| p.agrees()), "seed {seed}");
        }
    }

    #[test]
    fn same_seed_same_piece() {
        let cfg = SynthConfig {
            seed: 9,
            noise_mm: NoiseMm::isotropic(1.5),
            p_swap: 0.2,
            p_drop: 0.1,
            ..SynthConfig::default()
        };
        let a = generate_piece("p", &cfg).unwrap();
        let b = generate_piece("p", &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(inject_corruptions(&a, &cfg).unwrap(), inject_corruptions(&b, &cfg).unwrap());
        let c = generate_piece("p", &SynthConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.poses, c.poses);
    }

    #[test]
    fn single_note_piece_covers_its_offset() {
        let cfg = SynthConfig { num_notes: 1, ..SynthConfig::default() };
        let piece = generate_piece("p", &cfg).unwrap();
        assert_eq!(piece.notes.len(), 1);
        assert!(piece.poses.len() > piece.notes[0].offset_frame as usize);
    }

    #[test]
    fn zero_rates_are_identity() {
        let cfg = SynthConfig { num_notes: 100, ..SynthConfig::default() };
        let piece = generate_piece("p", &cfg).unwrap();
        let c = inject_corruptions(&piece, &cfg).unwrap();
        assert_eq!(c.poses, piece.poses);
        assert_eq!(c.notes, piece.notes);
        assert_eq!(c.ledger.total(), 0);
    }

    #[test]
    fn noise_is_truncated_at_three_sigma() {
        let cfg = SynthConfig { num_notes: 50, noise_mm: NoiseMm::isotropic(0.5), ..SynthConfig::default() };
        let clean = generate_piece("p", &SynthConfig { noise_mm: NoiseMm::default(), ..cfg.clone() }).unwrap();
        let noisy = generate_piece("p", &cfg).unwrap();
        // Same layout stream, so the difference is pure noise.
        for (a, b) in clean.poses.frames.iter().zip(&noisy.poses.frames) {
            for (p, q) in a.iter().zip(b) {
                for axis in 0..3 {
                    assert!((p[axis] - q[axis]).abs() <= 1.5 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn ledger_predicts_disagreements_exactly() {
        let cfg = SynthConfig {
            seed: 3,
            num_notes: 1000,
            p_swap: 0.1,
            p_drop: 0.05,
            ..SynthConfig::default()
        };
        let piece = generate_piece("p", &cfg).unwrap();
        let c = inject_corruptions(&piece, &cfg).unwrap();
        let rule = rule_track(&c.notes, &c.poses);
        let pairs = align_tracks(&piece.edited, &rule).unwrap();
        let stats = agreement_stats(&[("p", pairs.clone())]).unwrap();
        assert_eq!(stats.rule_error_count, c.ledger.total());
        for s in &c.ledger.swapped {
            let p = pairs.iter().find(|p| p.reference.note_id == s.note_id).unwrap();
            assert_eq!(p.other_label, s.shown_label);
        }
        assert_eq!(piece.edited.len() - rule.labeled_count(), c.ledger.dropped.len());
        // Roughly p_swap of the non-dropped notes end up swapped.
        let rate = c.ledger.swapped.len() as f64 / (1000 - c.ledger.dropped.len()) as f64;
        assert!((0.04..0.12).contains(&rate), "swap rate {rate}");
    }
}
