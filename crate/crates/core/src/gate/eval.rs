use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::decision::{apply_gate, ClassDistribution, GateConfig, GateDecision};
use super::intervals::TInterval;
use crate::corpus::{align_tracks, FingerLabel, FingeringTrack, Timestamp};
use crate::error::{Error, Result};

/// One edited note with the labels scored against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteScore {
    pub note_id: String,
    pub edited: FingerLabel,
    pub rule: FingerLabel,
    pub probe: FingerLabel,
    pub fired: bool,
}

/// Raw counts behind every ratio in an [`EvalReport`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub notes: usize,
    pub rule_correct: usize,
    pub probe_correct: usize,
    pub flags: usize,
    /// Fired where the rule label was wrong.
    pub true_flags: usize,
    /// Fired where the rule label was right.
    pub breaks: usize,
}

impl Counts {
    pub fn from_scores(scores: &[NoteScore]) -> Self {
        let mut c = Counts::default();
        for s in scores {
            c.notes += 1;
            let rule_ok = s.rule == s.edited;
            c.rule_correct += rule_ok as usize;
            c.probe_correct += (s.probe == s.edited) as usize;
            if s.fired {
                c.flags += 1;
                if rule_ok {
                    c.breaks += 1;
                } else {
                    c.true_flags += 1;
                }
            }
        }
        c
    }

    pub fn add(&mut self, o: &Counts) {
        self.notes += o.notes;
        self.rule_correct += o.rule_correct;
        self.probe_correct += o.probe_correct;
        self.flags += o.flags;
        self.true_flags += o.true_flags;
        self.breaks += o.breaks;
    }

    pub fn rule_errors(&self) -> usize {
        self.notes - self.rule_correct
    }

    fn ratio(num: usize, den: usize) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn rule_accuracy(&self) -> f64 {
        Self::ratio(self.rule_correct, self.notes)
    }

    pub fn probe_accuracy(&self) -> f64 {
        Self::ratio(self.probe_correct, self.notes)
    }

    /// Probe minus rule accuracy, in percentage points.
    pub fn delta_pp(&self) -> f64 {
        if self.notes == 0 {
            0.0
        } else {
            100.0 * (self.probe_correct as f64 - self.rule_correct as f64) / self.notes as f64
        }
    }

    pub fn flag_precision(&self) -> Option<f64> {
        (self.flags > 0).then(|| self.true_flags as f64 / self.flags as f64)
    }

    pub fn flag_recall(&self) -> f64 {
        Self::ratio(self.true_flags, self.rule_errors())
    }

    pub fn break_rate(&self) -> f64 {
        Self::ratio(self.breaks, self.rule_correct)
    }
}

/// Scores of one piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceScore {
    pub piece_id: String,
    pub notes: Vec<NoteScore>,
}

impl PieceScore {
    pub fn counts(&self) -> Counts {
        Counts::from_scores(&self.notes)
    }
}

/// Scores every edited note. Rule and probe labels come from the probe
/// track's decisions, matched to edited notes by alignment; edited notes
/// with no match score as missing and unflagged.
pub fn score_piece(
    decisions: &[GateDecision],
    probe: &FingeringTrack,
    edited: &FingeringTrack,
) -> Result<PieceScore> {
    if decisions.len() != probe.notes.len() {
        return Err(Error::CountMismatch {
            what: "gate decisions",
            expected: probe.notes.len(),
            got: decisions.len(),
        });
    }
    let by_id: HashMap<&str, &GateDecision> = decisions.iter().map(|d| (d.note_id.as_str(), d)).collect();
    let pairs = align_tracks(edited, probe)?;
    let notes = pairs
        .into_iter()
        .map(|p| {
            let decision = match p.matched {
                Some(i) => {
                    let id = probe.notes[i].note_id.as_str();
                    Some(*by_id.get(id).ok_or_else(|| {
                        Error::Alignment(format!("no gate decision for probe note {id}"))
                    })?)
                }
                None => None,
            };
            Ok(NoteScore {
                note_id: p.reference.note_id.clone(),
                edited: p.reference.label,
                rule: decision.map_or(FingerLabel::MISSING, |d| d.rule_label),
                probe: p.other_label,
                fired: decision.is_some_and(|d| d.fired),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PieceScore {
        piece_id: edited.piece_id.clone(),
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceEval {
    pub piece_id: String,
    pub counts: Counts,
    pub rule_accuracy: f64,
    pub probe_accuracy: f64,
    pub delta_pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Null when nothing fired.
    pub flag_precision: Option<f64>,
    pub flag_recall: f64,
    pub break_rate: f64,
    pub rule_accuracy: f64,
    pub probe_accuracy: f64,
    pub delta_pp: f64,
    pub counts: Counts,
    pub per_piece: Vec<PieceEval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap_lower95: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_ci: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<usize>,
}

impl EvalReport {
    pub fn with_t_interval(mut self, ci: &TInterval) -> Self {
        self.t_ci = Some((ci.low, ci.high));
        self.df = Some(ci.df);
        self
    }

    pub fn piece_counts(&self) -> Vec<Counts> {
        self.per_piece.iter().map(|p| p.counts).collect()
    }
}

/// Pools the note scores of all pieces. Ratios with a zero denominator are
/// reported as 0, except precision, which is null.
pub fn evaluate(pieces: &[PieceScore]) -> Result<EvalReport> {
    let mut total = Counts::default();
    let per_piece: Vec<PieceEval> = pieces
        .iter()
        .map(|p| {
            let c = p.counts();
            total.add(&c);
            PieceEval {
                piece_id: p.piece_id.clone(),
                counts: c,
                rule_accuracy: c.rule_accuracy(),
                probe_accuracy: c.probe_accuracy(),
                delta_pp: c.delta_pp(),
            }
        })
        .collect();
    if total.notes == 0 {
        return Err(Error::Empty("no edited notes to evaluate".into()));
    }
    Ok(EvalReport {
        flag_precision: total.flag_precision(),
        flag_recall: total.flag_recall(),
        break_rate: total.break_rate(),
        rule_accuracy: total.rule_accuracy(),
        probe_accuracy: total.probe_accuracy(),
        delta_pp: total.delta_pp(),
        counts: total,
        per_piece,
        bootstrap_lower95: None,
        t_ci: None,
        df: None,
    })
}

/// Probe output of one piece together with the tracks it is scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct GateInput {
    pub distributions: Vec<ClassDistribution>,
    pub rule: FingeringTrack,
    pub edited: FingeringTrack,
}

/// Gates and scores every piece under one configuration.
pub fn evaluate_gate(inputs: &[GateInput], cfg: &GateConfig) -> Result<EvalReport> {
    let scores = inputs
        .iter()
        .map(|i| {
            let (probe, decisions) = apply_gate(&i.distributions, &i.rule, cfg, "", Timestamp::from_millis(0))?;
            score_piece(&decisions, &probe, &i.edited)
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate(&scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau: f64,
    pub rho: f64,
    pub report: EvalReport,
}

/// One report per τ with ρ fixed. The τ values are taken as given, so the
/// limiting cases 0 and 1 may be swept.
pub fn sweep_tau(inputs: &[GateInput], taus: &[f64], rho: f64) -> Result<Vec<SweepRow>> {
    taus.iter()
        .map(|&tau| {
            let cfg = GateConfig {
                top1_threshold: tau,
                ratio_threshold: rho,
            };
            Ok(SweepRow {
                tau,
                rho,
                report: evaluate_gate(inputs, &cfg)?,
            })
        })
        .collect()
}

pub const SWEEP_TAUS: [f64; 4] = [0.70, 0.80, 0.90, 0.95];

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "tau,rho,flags,flag_precision,flag_recall,break_rate,rule_accuracy,probe_accuracy,delta_pp\n",
    );
    for r in rows {
        let rep = &r.report;
        let precision = rep.flag_precision.map(|p| p.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.tau,
            r.rho,
            rep.counts.flags,
            precision,
            rep.flag_recall,
            rep.break_rate,
            rep.rule_accuracy,
            rep.probe_accuracy,
            rep.delta_pp
        ));
    }
    out
}
