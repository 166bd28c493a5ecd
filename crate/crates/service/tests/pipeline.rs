use std::sync::Arc;

use serde_json::{json, Value};

use fingerlab::corpus::{ReviewStage, Timestamp, TrackKind};
use fingerlab::gate::EvalReport;
use fingerlab_service::{CorpusStore, JobKind, JobRegistry, JobState};

fn run(jobs: &JobRegistry, kind: JobKind, params: Value) -> Value {
    let rec = jobs.run(kind, params);
    assert_eq!(rec.state, JobState::Succeeded, "{kind}: {:?}", rec.error);
    assert!(jobs.store().root().join(format!("runs/{}.json", rec.job_id)).exists());
    rec.result.unwrap()
}

#[test]
fn full_loop_on_synthetic_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let jobs = JobRegistry::new(Arc::new(CorpusStore::open(dir.path()).unwrap()));
    let store = jobs.store().clone();

    let synth = run(
        &jobs,
        JobKind::Synth,
        json!({ "count": 20, "config": { "seed": 7, "num_notes": 80, "p_swap": 0.1, "p_drop": 0.05 } }),
    );
    assert_eq!(synth["pieces"].as_array().unwrap().len(), 20);
    run(&jobs, JobKind::Annotate, Value::Null);

    let refused = jobs.run(JobKind::Train, Value::Null);
    assert_eq!(refused.state, JobState::Failed);
    assert!(refused.error.unwrap().contains("R1"));

    let review = run(&jobs, JobKind::OracleReview, Value::Null);
    assert!(review["ops"].as_u64().unwrap() > 0);
    for id in store.piece_ids().unwrap() {
        let edited = store.require_track(&id, TrackKind::Edited).unwrap();
        let truth = store.truth(&id).unwrap().unwrap();
        let labels = |t: &fingerlab::FingeringTrack| {
            let mut v: Vec<_> = t.notes.iter().map(|n| (n.onset_frame, n.key_index, n.label)).collect();
            v.sort();
            v
        };
        assert_eq!(labels(&edited), labels(&truth), "{id}");
        assert_eq!(store.replay_edited(&id).unwrap(), edited, "{id}");
        assert!(store.status(&id).unwrap().r1.done);
    }

    let train_ids: Vec<String> = (0..15).map(|i| format!("piece-{i:03}")).collect();
    let held_ids: Vec<String> = (15..20).map(|i| format!("piece-{i:03}")).collect();
    let model = run(&jobs, JobKind::Train, json!({ "piece_ids": train_ids, "config": { "epochs": 2, "width": 16 } }));
    let model_id = model["model_id"].as_str().unwrap();
    assert_eq!(model["piece_ids"].as_array().unwrap().len(), 15);
    assert!(store.path("models", model_id, ".json").exists());

    run(&jobs, JobKind::Infer, json!({ "piece_ids": held_ids }));
    for id in &held_ids {
        let probe = store.require_track(id, TrackKind::Probe).unwrap();
        assert_eq!(probe.model_id.as_deref(), Some(model_id));
        assert!(store.root().join("probe").join(format!("{id}.json")).exists());
        assert_eq!(store.decisions(id).unwrap().unwrap().len(), probe.notes.len());
        assert_eq!(store.status(id).unwrap().probe_runs.len(), 1);
    }

    let report = run(&jobs, JobKind::Eval, json!({ "resamples": 200, "seed_deltas": [1.0, 2.0, 3.0] }));
    let report: EvalReport = serde_json::from_value(report).unwrap();
    assert_eq!(report.per_piece.len(), 5);
    assert!(report.bootstrap_lower95.is_some());
    assert_eq!(report.df, Some(2));
    assert!(store.root().join("reports/eval.json").exists());

    let sweep = run(&jobs, JobKind::Sweep, Value::Null);
    let flags: Vec<u64> = sweep["flags"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(flags.len(), 4);
    assert!(flags.windows(2).all(|w| w[1] <= w[0]));
    assert!(std::fs::read_to_string(store.root().join("reports/sweep.csv")).unwrap().lines().count() == 5);

    let audit = run(&jobs, JobKind::Audit, Value::Null);
    assert_eq!(audit["stale"], 0);
    // A later R2 pass makes that piece's probe output stale.
    std::thread::sleep(std::time::Duration::from_millis(5));
    store.set_stage(&held_ids[0], ReviewStage::R2, true, Timestamp::now()).unwrap();
    let audit = run(&jobs, JobKind::Audit, Value::Null);
    assert_eq!(audit["stale"], 1);
}

#[test]
fn infer_without_model_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let jobs = JobRegistry::new(Arc::new(CorpusStore::open(dir.path()).unwrap()));
    run(&jobs, JobKind::Synth, json!({ "count": 1, "config": { "num_notes": 10 } }));
    run(&jobs, JobKind::Annotate, Value::Null);
    let rec = jobs.run(JobKind::Infer, Value::Null);
    assert_eq!(rec.state, JobState::Failed);
    assert!(rec.error.unwrap().contains("train"));
    let rec = jobs.run(JobKind::Eval, Value::Null);
    assert_eq!(rec.state, JobState::Failed);
}

#[test]
fn annotate_keeps_reviewed_edits() {
    let dir = tempfile::tempdir().unwrap();
    let jobs = JobRegistry::new(Arc::new(CorpusStore::open(dir.path()).unwrap()));
    run(&jobs, JobKind::Synth, json!({ "count": 1, "config": { "num_notes": 40, "p_swap": 0.3 } }));
    run(&jobs, JobKind::Annotate, Value::Null);
    run(&jobs, JobKind::OracleReview, Value::Null);
    let store = jobs.store();
    let before = store.require_track("piece-000", TrackKind::Edited).unwrap();
    let again = run(&jobs, JobKind::Annotate, Value::Null);
    assert_eq!(again["edited_initialized"], 0);
    assert_eq!(store.require_track("piece-000", TrackKind::Edited).unwrap(), before);
}
