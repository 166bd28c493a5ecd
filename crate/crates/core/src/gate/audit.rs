use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::decision::GateConfig;
use crate::corpus::{ProbeRun, ReviewStage, ReviewStatus, Timestamp};

/// Written by an inference run: which pieces got probe tracks from which model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceManifest {
    pub model_id: String,
    pub piece_ids: Vec<String>,
    pub gate: GateConfig,
    pub started_at: Timestamp,
    pub produced_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VintageRow {
    pub piece_id: String,
    pub stage: ReviewStage,
    pub stale: bool,
    pub probe_produced_at: Timestamp,
    pub stage_completed_at: Timestamp,
}

/// For every done stage with a completion time, whether the latest probe
/// output for the piece predates it. Probe runs come from the status files
/// and from inference manifests. Pieces without any probe run are skipped.
pub fn vintage_audit(statuses: &[ReviewStatus], manifests: &[InferenceManifest]) -> Vec<VintageRow> {
    let mut from_manifests: HashMap<&str, Vec<ProbeRun>> = HashMap::new();
    for m in manifests {
        for p in &m.piece_ids {
            from_manifests.entry(p.as_str()).or_default().push(ProbeRun {
                model_id: m.model_id.clone(),
                produced_at: m.produced_at,
            });
        }
    }
    let mut rows = Vec::new();
    for status in statuses {
        let latest = status
            .probe_runs
            .iter()
            .chain(from_manifests.get(status.piece_id.as_str()).into_iter().flatten())
            .map(|r| r.produced_at)
            .max();
        let Some(latest) = latest else { continue };
        for stage in ReviewStage::ALL {
            let state = status.stage(stage);
            let Some(completed) = state.completed_at.filter(|_| state.done) else {
                continue;
            };
            rows.push(VintageRow {
                piece_id: status.piece_id.clone(),
                stage,
                stale: latest < completed,
                probe_produced_at: latest,
                stage_completed_at: completed,
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::StageState;

    fn ts(ms: i64) -> Timestamp {
        Timestamp::from_millis(ms)
    }

    fn status(r2_done: Option<i64>, probe: Option<i64>) -> ReviewStatus {
        let mut s = ReviewStatus::new("p1");
        s.r1 = StageState {
            done: true,
            completed_at: Some(ts(1_000)),
        };
        if let Some(t) = r2_done {
            s.r2 = StageState {
                done: true,
                completed_at: Some(ts(t)),
            };
        }
        if let Some(t) = probe {
            s.probe_runs.push(ProbeRun {
                model_id: "m".into(),
                produced_at: ts(t),
            });
        }
        s
    }

    fn r2_row(rows: &[VintageRow]) -> Option<&VintageRow> {
        rows.iter().find(|r| r.stage == ReviewStage::R2)
    }

    #[test]
    fn probe_after_r2_is_fresh() {
        let rows = vintage_audit(&[status(Some(5_000), Some(6_000))], &[]);
        assert!(!r2_row(&rows).unwrap().stale);
    }

    #[test]
    fn probe_before_r2_is_stale() {
        let rows = vintage_audit(&[status(Some(5_000), Some(4_000))], &[]);
        assert!(r2_row(&rows).unwrap().stale);
        // R1 finished before the probe ran.
        assert!(!rows.iter().find(|r| r.stage == ReviewStage::R1).unwrap().stale);
    }

    #[test]
    fn open_stage_not_reported() {
        let rows = vintage_audit(&[status(None, Some(4_000))], &[]);
        assert!(r2_row(&rows).is_none());
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn latest_run_wins_including_manifests() {
        let manifest = InferenceManifest {
            model_id: "later".into(),
            piece_ids: vec!["p1".into()],
            gate: GateConfig::default(),
            started_at: ts(5_500),
            produced_at: ts(6_000),
        };
        let rows = vintage_audit(&[status(Some(5_000), Some(4_000))], &[manifest]);
        let row = r2_row(&rows).unwrap();
        assert!(!row.stale);
        assert_eq!(row.probe_produced_at, ts(6_000));
    }

    #[test]
    fn pieces_without_probe_runs_are_skipped() {
        assert!(vintage_audit(&[status(Some(5_000), None)], &[]).is_empty());
    }
}
