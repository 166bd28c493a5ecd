use serde::{Deserialize, Serialize};

use super::align::AlignedPair;
use crate::error::{Error, Result};

/// Rule-vs-edited agreement over a corpus. Notes the rule track missed and
/// notes it labeled with the wrong finger both count as rule errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub total_edited_notes: usize,
    pub matched_notes: usize,
    pub agreement: f64,
    /// `(piece_id, 1 - piece agreement)`; pieces without notes are omitted.
    pub per_piece_disagreement: Vec<(String, f64)>,
    pub rule_error_count: usize,
}

impl AgreementStats {
    pub fn disagreement(&self) -> f64 {
        1.0 - self.agreement
    }

    pub fn median_disagreement(&self) -> Option<f64> {
        self.disagreement_quantile(0.5)
    }

    /// Quantile of the per-piece disagreement using linear interpolation
    /// between order statistics (the usual "type 7" definition).
    pub fn disagreement_quantile(&self, q: f64) -> Option<f64> {
        let mut values: Vec<f64> = self.per_piece_disagreement.iter().map(|(_, d)| *d).collect();
        quantile(&mut values, q)
    }

    pub fn max_disagreement(&self) -> Option<f64> {
        self.per_piece_disagreement
            .iter()
            .map(|(_, d)| *d)
            .fold(None, |acc, d| Some(acc.map_or(d, |a: f64| a.max(d))))
    }
}

pub(crate) fn quantile(values: &mut [f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(values[lo] + (values[hi] - values[lo]) * frac)
}

/// Agreement statistics from per-piece alignments produced by
/// [`align_tracks`](super::align_tracks).
pub fn agreement_stats<S: AsRef<str>>(pieces: &[(S, Vec<AlignedPair>)]) -> Result<AgreementStats> {
    let mut total = 0usize;
    let mut matched = 0usize;
    let mut per_piece = Vec::with_capacity(pieces.len());
    for (piece_id, pairs) in pieces {
        let agree = pairs.iter().filter(|p| p.agrees()).count();
        total += pairs.len();
        matched += agree;
        if !pairs.is_empty() {
            per_piece.push((
                piece_id.as_ref().to_string(),
                1.0 - agree as f64 / pairs.len() as f64,
            ));
        }
    }
    if total == 0 {
        return Err(Error::Empty("agreement over a corpus with no edited notes".into()));
    }
    Ok(AgreementStats {
        total_edited_notes: total,
        matched_notes: matched,
        agreement: matched as f64 / total as f64,
        per_piece_disagreement: per_piece,
        rule_error_count: total - matched,
    })
}
