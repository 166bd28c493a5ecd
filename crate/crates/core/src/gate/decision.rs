use serde::{Deserialize, Serialize};

use crate::corpus::{FingerLabel, FingeringTrack, Timestamp, TrackKind, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::probe::NoteOutput;

/// Probe class distribution for one note.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution(pub [f64; NUM_CLASSES]);

impl ClassDistribution {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(probs: [f64; NUM_CLASSES]) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Validation("class probabilities must be finite and non-negative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Validation(format!("class probabilities sum to {sum}")));
        }
        Ok(ClassDistribution(probs))
    }

    /// Most probable class and its probability; ties go to the lower class.
    pub fn top1(&self) -> (FingerLabel, f64) {
        let mut best = 0;
        for (c, p) in self.0.iter().enumerate() {
            if *p > self.0[best] {
                best = c;
            }
        }
        (FingerLabel::new(best as u8).expect("class in range"), self.0[best])
    }

    pub fn prob(&self, label: FingerLabel) -> f64 {
        self.0[label.index()]
    }
}

impl From<&NoteOutput> for ClassDistribution {
    fn from(out: &NoteOutput) -> Self {
        ClassDistribution(out.class_probs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    /// τ
    pub top1_threshold: f64,
    /// ρ
    pub ratio_threshold: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            top1_threshold: 0.9,
            ratio_threshold: 2.0,
        }
    }
}

impl GateConfig {
    pub fn new(top1_threshold: f64, ratio_threshold: f64) -> Result<Self> {
        let cfg = GateConfig {
            top1_threshold,
            ratio_threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.top1_threshold > 0.0 && self.top1_threshold < 1.0) {
            return Err(Error::Config(format!(
                "top-1 threshold {} outside (0, 1)",
                self.top1_threshold
            )));
        }
        if self.ratio_threshold.is_nan() || self.ratio_threshold < 1.0 {
            return Err(Error::Config(format!(
                "ratio threshold {} below 1",
                self.ratio_threshold
            )));
        }
        Ok(())
    }

    /// The gate predicate. `p_rule == 0` makes the ratio infinite.
    pub fn fires(&self, top1: FingerLabel, rule: FingerLabel, p_cls: f64, p_rule: f64) -> bool {
        top1 != rule
            && p_cls > self.top1_threshold
            && (p_rule == 0.0 || p_cls / p_rule > self.ratio_threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub note_id: String,
    pub rule_label: FingerLabel,
    pub top1_label: FingerLabel,
    pub p_cls: f64,
    pub p_rule: f64,
    pub fired: bool,
    pub final_label: FingerLabel,
}

pub fn decide(note_id: &str, rule: FingerLabel, dist: &ClassDistribution, cfg: &GateConfig) -> GateDecision {
    let (top1, p_cls) = dist.top1();
    let p_rule = dist.prob(rule);
    let fired = cfg.fires(top1, rule, p_cls, p_rule);
    GateDecision {
        note_id: note_id.to_string(),
        rule_label: rule,
        top1_label: top1,
        p_cls,
        p_rule,
        fired,
        final_label: if fired { top1 } else { rule },
    }
}

/// Gates every note of `rule`, producing the probe track and the per-note
/// decisions. `distributions[i]` belongs to `rule.notes[i]`.
pub fn apply_gate(
    distributions: &[ClassDistribution],
    rule: &FingeringTrack,
    cfg: &GateConfig,
    model_id: &str,
    produced_at: Timestamp,
) -> Result<(FingeringTrack, Vec<GateDecision>)> {
    if distributions.len() != rule.notes.len() {
        return Err(Error::CountMismatch {
            what: "class distributions",
            expected: rule.notes.len(),
            got: distributions.len(),
        });
    }
    let decisions: Vec<GateDecision> = rule
        .notes
        .iter()
        .zip(distributions)
        .map(|(n, d)| decide(&n.note_id, n.label, d, cfg))
        .collect();
    let notes = rule
        .notes
        .iter()
        .zip(&decisions)
        .map(|(n, d)| n.with_label(d.final_label))
        .collect();
    let track = FingeringTrack::new(
        rule.piece_id.clone(),
        TrackKind::Probe,
        rule.frame_rate_hz,
        produced_at,
        notes,
    )?
    .with_model_id(model_id);
    Ok((track, decisions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::NoteRecord;
    use proptest::prelude::*;

    fn label(c: u8) -> FingerLabel {
        FingerLabel::new(c).unwrap()
    }

    /// Mass `p_cls` on class 7, `p_rule` on class `rule`, rest spread.
    fn dist(p_cls: f64, rule: u8, p_rule: f64) -> ClassDistribution {
        let mut p = [0.0; NUM_CLASSES];
        p[7] = p_cls;
        if rule != 7 {
            p[rule as usize] = p_rule;
        }
        let rest = 1.0 - p.iter().sum::<f64>();
        let others: Vec<usize> = (0..NUM_CLASSES).filter(|&c| c != 7 && c != rule as usize).collect();
        for c in &others {
            p[*c] = rest / others.len() as f64;
        }
        ClassDistribution::new(p).unwrap()
    }

    #[test]
    fn top1_equal_to_rule_never_fires() {
        let d = decide("n", label(7), &dist(0.99, 7, 0.99), &GateConfig::default());
        assert!(!d.fired);
        assert_eq!(d.final_label, label(7));
    }

    #[test]
    fn ratio_above_two_fires() {
        let d = decide("n", label(2), &dist(0.92, 2, 0.04), &GateConfig::default());
        assert!(d.fired);
        assert_eq!(d.final_label, label(7));
        // The threshold examples use p_rule values that cannot coexist with
        // p_cls = 0.92 in one distribution, so the predicate is checked directly.
        let cfg = GateConfig::default();
        assert!(cfg.fires(label(7), label(2), 0.92, 0.40));
        assert!(!cfg.fires(label(7), label(2), 0.92, 0.50));
    }

    #[test]
    fn zero_rule_probability_counts_as_infinite_ratio() {
        let cfg = GateConfig::default();
        assert!(cfg.fires(label(7), label(2), 0.95, 0.0));
        assert!(!cfg.fires(label(7), label(2), 0.85, 0.0));
    }

    #[test]
    fn config_bounds() {
        assert!(GateConfig::new(0.9, 2.0).is_ok());
        assert!(GateConfig::new(1.0, 2.0).is_err());
        assert!(GateConfig::new(0.0, 2.0).is_err());
        assert!(GateConfig::new(0.5, 0.9).is_err());
    }

    #[test]
    fn distribution_must_sum_to_one() {
        let mut p = [0.0; NUM_CLASSES];
        p[1] = 0.5;
        assert!(ClassDistribution::new(p).is_err());
        p[2] = 0.5;
        assert!(ClassDistribution::new(p).is_ok());
    }

    #[test]
    fn top1_tie_takes_lower_class() {
        let mut p = [0.0; NUM_CLASSES];
        p[3] = 0.5;
        p[6] = 0.5;
        assert_eq!(ClassDistribution(p).top1().0, label(3));
    }

    fn track(labels: &[u8]) -> FingeringTrack {
        let notes = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| NoteRecord::new(format!("n{i}"), 40, i as u32 * 4, i as u32 * 4 + 3, label(l)))
            .collect();
        FingeringTrack::new("p", TrackKind::Rule, 30.0, Timestamp::from_millis(0), notes).unwrap()
    }

    #[test]
    fn apply_gate_counts_must_match() {
        let rule = track(&[1, 2]);
        let err = apply_gate(&[dist(0.95, 1, 0.01)], &rule, &GateConfig::default(), "m", Timestamp::from_millis(0));
        assert!(matches!(err, Err(Error::CountMismatch { expected: 2, got: 1, .. })));
    }

    #[test]
    fn probe_track_carries_final_labels_and_model_id() {
        let rule = track(&[1, 2, 7]);
        let dists = [dist(0.95, 1, 0.01), dist(0.5, 2, 0.4), dist(0.99, 7, 0.99)];
        let (probe, decisions) =
            apply_gate(&dists, &rule, &GateConfig::default(), "abc", Timestamp::from_millis(5)).unwrap();
        assert_eq!(probe.kind, TrackKind::Probe);
        assert_eq!(probe.model_id.as_deref(), Some("abc"));
        let labels: Vec<u8> = probe.notes.iter().map(|n| n.label.class_id()).collect();
        assert_eq!(labels, vec![7, 2, 7]);
        assert_eq!(decisions.iter().filter(|d| d.fired).count(), 1);
    }

    fn arb_dist() -> impl Strategy<Value = ClassDistribution> {
        prop::array::uniform11(0.0f64..1.0).prop_filter_map("non-zero mass", |raw| {
            let s: f64 = raw.iter().sum();
            (s > 0.0).then(|| {
                let mut p = raw;
                p.iter_mut().for_each(|v| *v /= s);
                ClassDistribution(p)
            })
        })
    }

    proptest! {
        #[test]
        fn decision_invariants(d in arb_dist(), rule in 0u8..11, tau in 0.01f64..0.99, rho in 1.0f64..5.0) {
            let cfg = GateConfig { top1_threshold: tau, ratio_threshold: rho };
            let dec = decide("n", label(rule), &d, &cfg);
            let ratio_ok = dec.p_rule == 0.0 || dec.p_cls / dec.p_rule > rho;
            prop_assert_eq!(dec.fired, dec.top1_label != dec.rule_label && dec.p_cls > tau && ratio_ok);
            prop_assert_eq!(dec.final_label, if dec.fired { dec.top1_label } else { dec.rule_label });
        }

        #[test]
        fn gate_is_idempotent(dists in prop::collection::vec(arb_dist(), 1..12), seed_labels in prop::collection::vec(0u8..11, 12)) {
            let rule = track(&seed_labels[..dists.len()]);
            let cfg = GateConfig { top1_threshold: 0.3, ratio_threshold: 1.2 };
            let (probe, _) = apply_gate(&dists, &rule, &cfg, "m", Timestamp::from_millis(0)).unwrap();
            let (again, second) = apply_gate(&dists, &probe, &cfg, "m", Timestamp::from_millis(0)).unwrap();
            prop_assert_eq!(&again.notes, &probe.notes);
            prop_assert!(second.iter().all(|d| !d.fired));
        }
    }
}
