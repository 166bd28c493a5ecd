use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use fingerlab::corpus::{FingerLabel, FingeringTrack, ReviewStage, Timestamp};
use fingerlab_service::edits::EditOp;
use fingerlab_service::{router, AppState, CorpusStore, JobKind, JobRegistry, JobState};

struct Fixture {
    _dir: tempfile::TempDir,
    root: std::path::PathBuf,
    app: Router,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let jobs = JobRegistry::new(Arc::new(CorpusStore::open(&root).unwrap()));
    for (kind, params) in [
        (JobKind::Synth, json!({ "prefix": "p", "count": 2, "config": { "num_notes": 30, "p_swap": 0.2 } })),
        (JobKind::Annotate, Value::Null),
    ] {
        let rec = jobs.run(kind, params);
        assert_eq!(rec.state, JobState::Succeeded, "{:?}", rec.error);
    }
    let app = router(AppState::new(CorpusStore::open(&root).unwrap()));
    Fixture { _dir: dir, root, app }
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(serde_json::to_vec(&v).unwrap())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    send(app, "GET", uri, None).await
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    send(app, "POST", uri, Some(body)).await
}

fn label(c: u8) -> FingerLabel {
    FingerLabel::new(c).unwrap()
}

fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.display().to_string(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

async fn wait_for_job(app: &Router, job_id: &str) -> Value {
    for _ in 0..600 {
        let (code, rec) = get(app, &format!("/jobs/{job_id}")).await;
        assert_eq!(code, StatusCode::OK);
        if rec["state"] != "running" {
            return rec;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("job {job_id} did not finish");
}

#[tokio::test]
async fn pieces_and_tracks() {
    let f = fixture();
    let (code, list) = get(&f.app, "/pieces").await;
    assert_eq!(code, StatusCode::OK);
    let ids: Vec<&str> = list.as_array().unwrap().iter().map(|p| p["piece_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["p-000", "p-001"]);

    let (code, piece) = get(&f.app, "/pieces/p-000").await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(piece["num_notes"], 30);
    assert_eq!(piece["edited_version"], 0);
    assert_eq!(get(&f.app, "/pieces/nope").await.0, StatusCode::NOT_FOUND);

    for kind in ["rule", "edited"] {
        let (code, track) = get(&f.app, &format!("/pieces/p-000/tracks/{kind}")).await;
        assert_eq!(code, StatusCode::OK);
        let track: FingeringTrack = serde_json::from_value(track).unwrap();
        assert_eq!(track.notes.len(), 30);
    }
    assert_eq!(get(&f.app, "/pieces/p-000/tracks/probe").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&f.app, "/pieces/p-000/tracks/other").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&f.app, "/pieces/p-000/gate-decisions").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn pose_window() {
    let f = fixture();
    let (code, slice) = get(&f.app, "/pieces/p-001/poses?from=2&to=5").await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(slice["from"], 2);
    assert_eq!(slice["frames"].as_array().unwrap().len(), 3);
    let total = slice["total_frames"].as_u64().unwrap();

    let (_, all) = get(&f.app, "/pieces/p-001/poses").await;
    assert_eq!(all["frames"].as_array().unwrap().len() as u64, total);
    assert_eq!(all["frames"][2], slice["frames"][0]);

    let (code, tail) = get(&f.app, &format!("/pieces/p-001/poses?from={}&to={}", total - 1, total + 50)).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(tail["frames"].as_array().unwrap().len(), 1);
    assert_eq!(get(&f.app, "/pieces/p-001/poses?from=5&to=2").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn edits_round_trip_and_conflicts() {
    let f = fixture();
    let (_, edited) = get(&f.app, "/pieces/p-000/tracks/edited").await;
    let track: FingeringTrack = serde_json::from_value(edited).unwrap();
    let first = track.notes[0].clone();
    let new_label = label(if first.label == label(2) { 3 } else { 2 });

    let op = EditOp::set_label("p-000", &first.note_id, new_label);
    let (code, resp) = post(&f.app, "/pieces/p-000/edits", json!(op)).await;
    assert_eq!(code, StatusCode::OK, "{resp}");
    assert_eq!(resp["version"], 1);

    let (_, edited) = get(&f.app, "/pieces/p-000/tracks/edited").await;
    let track: FingeringTrack = serde_json::from_value(edited).unwrap();
    assert_eq!(track.notes[track.find(&first.note_id).unwrap()].label, new_label);

    // Stale client version.
    let stale = EditOp { base_version: Some(0), ..op.clone() };
    let (code, body) = post(&f.app, "/pieces/p-000/edits", json!(stale)).await;
    assert_eq!(code, StatusCode::CONFLICT, "{body}");

    let collide = EditOp::add_note("p-000", first.key_index, first.onset_frame, first.onset_frame + 2, label(1));
    assert_eq!(post(&f.app, "/pieces/p-000/edits", json!(collide)).await.0, StatusCode::CONFLICT);

    let unknown = EditOp::set_label("p-000", "ghost", label(1));
    assert_eq!(post(&f.app, "/pieces/p-000/edits", json!(unknown)).await.0, StatusCode::NOT_FOUND);

    let mut bad = json!(op);
    bad["label"] = json!(12);
    assert!(post(&f.app, "/pieces/p-000/edits", bad).await.0.is_client_error());

    let wrong_piece = EditOp::set_label("p-001", &first.note_id, label(1));
    assert_eq!(post(&f.app, "/pieces/p-000/edits", json!(wrong_piece)).await.0, StatusCode::BAD_REQUEST);

    let (_, piece) = get(&f.app, "/pieces/p-000").await;
    assert_eq!(piece["edited_version"], 1);
}

#[tokio::test]
async fn status_stages() {
    let f = fixture();
    let (code, status) = get(&f.app, "/pieces/p-000/status").await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(status["r1"]["done"], false);

    let r2 = json!({ "stage": ReviewStage::R2, "done": true });
    assert_eq!(post(&f.app, "/pieces/p-000/status", r2.clone()).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    let r1 = json!({ "stage": ReviewStage::R1, "done": true });
    let (code, status) = post(&f.app, "/pieces/p-000/status", r1).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(status["r1"]["done"], true);
    assert!(status["r1"]["completed_at"].is_string());
    let (code, status) = post(&f.app, "/pieces/p-000/status", r2).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(status["r2"]["done"], true);
    assert_eq!(get(&f.app, "/pieces/p-000/status").await.1, status);
}

#[tokio::test]
async fn backup_and_recovery() {
    let f = fixture();
    let (code, report) = get(&f.app, "/pieces/p-001/backup").await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(report["clean"], true);
    assert!(report["blob"].is_null());

    let (_, edited) = get(&f.app, "/pieces/p-001/tracks/edited").await;
    let track: FingeringTrack = serde_json::from_value(edited).unwrap();
    let (a, b) = (&track.notes[0].note_id, &track.notes[1].note_id);
    let blob = json!({
        "piece_id": "p-001",
        "base_version": 0,
        "pending": [EditOp::set_label("p-001", a, label(4)), EditOp::set_label("p-001", b, label(5))],
        "saved_at": Timestamp::from_millis(1_000),
    });
    let (code, receipt) = post(&f.app, "/pieces/p-001/backup", blob).await;
    assert_eq!(code, StatusCode::OK);
    assert!(receipt["blob_id"].is_string());

    let (_, report) = get(&f.app, "/pieces/p-001/backup").await;
    assert_eq!(report["clean"], true);
    // Recovery is a dry run: nothing is committed.
    assert_eq!(get(&f.app, "/pieces/p-001").await.1["edited_version"], 0);

    post(&f.app, "/pieces/p-001/edits", json!(EditOp::set_label("p-001", b, label(1)))).await;
    let (_, report) = get(&f.app, "/pieces/p-001/backup").await;
    assert_eq!(report["clean"], false);
    let conflicts = report["conflicts"].as_array().unwrap();
    assert_eq!(conflicts.len(), 1);
    assert_eq!(conflicts[0]["note_id"], json!(b));
}

#[tokio::test]
async fn jobs_endpoint() {
    let f = fixture();
    let (code, rec) = post(&f.app, "/jobs/train", json!({ "config": { "epochs": 1 } })).await;
    assert_eq!(code, StatusCode::ACCEPTED);
    let done = wait_for_job(&f.app, rec["job_id"].as_str().unwrap()).await;
    assert_eq!(done["state"], "failed");
    assert!(done["error"].as_str().unwrap().contains("R1"), "{done}");

    let (code, rec) = send(&f.app, "POST", "/jobs/audit", None).await;
    assert_eq!(code, StatusCode::ACCEPTED);
    let done = wait_for_job(&f.app, rec["job_id"].as_str().unwrap()).await;
    assert_eq!(done["state"], "succeeded");
    assert!(f.root.join("reports/audit.json").exists());

    assert_eq!(post(&f.app, "/jobs/bogus", json!({})).await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&f.app, "/jobs/nope-1-2").await.0, StatusCode::NOT_FOUND);
    let (code, rec) = post(&f.app, "/jobs/annotate", json!({ "rule": { "nope": 1 } })).await;
    assert_eq!(code, StatusCode::ACCEPTED);
    let done = wait_for_job(&f.app, rec["job_id"].as_str().unwrap()).await;
    assert_eq!(done["state"], "failed");
}

#[tokio::test]
async fn gets_are_side_effect_free() {
    let f = fixture();
    let before = snapshot(&f.root);
    for uri in [
        "/pieces",
        "/pieces/p-000",
        "/pieces/p-000/tracks/rule",
        "/pieces/p-000/tracks/edited",
        "/pieces/p-000/tracks/probe",
        "/pieces/p-000/poses?from=0&to=10",
        "/pieces/p-000/status",
        "/pieces/p-000/backup",
        "/pieces/p-000/gate-decisions",
        "/pieces/missing/status",
        "/jobs/none",
    ] {
        get(&f.app, uri).await;
    }
    assert_eq!(snapshot(&f.root), before);
}
