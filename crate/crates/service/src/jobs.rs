//! Pipeline jobs over a corpus directory.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use fingerlab::corpus::{
    align_tracks, FingeringTrack, NoteList, ProbeRun, ReviewStage, Timestamp, TrackKind,
};
use fingerlab::gate::{
    apply_gate, cluster_bootstrap, evaluate_gate, sweep_csv, sweep_tau, t_ci, vintage_audit,
    ClassDistribution, GateConfig, GateInput, InferenceManifest, BOOTSTRAP_RESAMPLES, SWEEP_TAUS,
};
use fingerlab::geometry::{annotate_piece, RuleConfig};
use fingerlab::probe::{
    inference_sequence, train_with, training_pair, ProbeConfig, ProbeModel, TrainingManifest,
};
use fingerlab::synth::{generate_corpus, SynthConfig};

use crate::edits::EditOp;
use crate::error::{Result, ServiceError};
use crate::store::CorpusStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobKind {
    Synth,
    Annotate,
    OracleReview,
    Train,
    Infer,
    Eval,
    Sweep,
    Audit,
}

impl JobKind {
    pub const ALL: [JobKind; 8] = [
        JobKind::Synth,
        JobKind::Annotate,
        JobKind::OracleReview,
        JobKind::Train,
        JobKind::Infer,
        JobKind::Eval,
        JobKind::Sweep,
        JobKind::Audit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            JobKind::Synth => "synth",
            JobKind::Annotate => "annotate",
            JobKind::OracleReview => "oracle-review",
            JobKind::Train => "train",
            JobKind::Infer => "infer",
            JobKind::Eval => "eval",
            JobKind::Sweep => "sweep",
            JobKind::Audit => "audit",
        }
    }
}

impl fmt::Display for JobKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for JobKind {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self> {
        JobKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ServiceError::NotFound(format!("job kind {s}")))
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub prefix: Option<String>,
    pub count: Option<usize>,
    pub config: SynthConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct AnnotateParams {
    pub piece_ids: Option<Vec<String>>,
    pub rule: RuleConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct OracleReviewParams {
    pub piece_ids: Option<Vec<String>>,
    pub stage: ReviewStage,
}

impl Default for OracleReviewParams {
    fn default() -> Self {
        OracleReviewParams {
            piece_ids: None,
            stage: ReviewStage::R1,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub piece_ids: Option<Vec<String>>,
    pub config: ProbeConfig,
    pub rule: RuleConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct InferParams {
    pub piece_ids: Option<Vec<String>>,
    pub model_id: Option<String>,
    pub gate: GateConfig,
    pub rule: RuleConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct EvalParams {
    pub piece_ids: Option<Vec<String>>,
    pub gate: GateConfig,
    pub resamples: usize,
    pub seed: u64,
    /// Scores only pieces whose R1 review is done.
    pub reviewed_only: bool,
    /// Δ of independently seeded runs, for the Student-t interval.
    pub seed_deltas: Option<Vec<f64>>,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            piece_ids: None,
            gate: GateConfig::default(),
            resamples: BOOTSTRAP_RESAMPLES,
            seed: 0,
            reviewed_only: true,
            seed_deltas: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct SweepParams {
    pub piece_ids: Option<Vec<String>>,
    pub taus: Vec<f64>,
    pub rho: f64,
    pub reviewed_only: bool,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            piece_ids: None,
            taus: SWEEP_TAUS.to_vec(),
            rho: GateConfig::default().ratio_threshold,
            reviewed_only: true,
        }
    }
}

fn parse<T: DeserializeOwned + Default>(params: &Value) -> Result<T> {
    if params.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(params.clone()).map_err(|e| ServiceError::BadRequest(e.to_string()))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn selected(store: &CorpusStore, ids: &Option<Vec<String>>) -> Result<Vec<String>> {
    match ids {
        Some(ids) => {
            for id in ids {
                store.ensure_piece(id)?;
            }
            Ok(ids.clone())
        }
        None => store.piece_ids(),
    }
}

/// Runs one job to completion. `job_id` names any manifest it writes.
pub fn run_job(store: &CorpusStore, kind: JobKind, params: &Value, job_id: &str) -> Result<Value> {
    match kind {
        JobKind::Synth => synth(store, parse(params)?),
        JobKind::Annotate => annotate(store, parse(params)?),
        JobKind::OracleReview => oracle_review(store, parse(params)?),
        JobKind::Train => train(store, parse(params)?),
        JobKind::Infer => infer(store, parse(params)?, job_id),
        JobKind::Eval => eval(store, parse(params)?),
        JobKind::Sweep => sweep(store, parse(params)?),
        JobKind::Audit => audit(store),
    }
}

fn synth(store: &CorpusStore, p: SynthParams) -> Result<Value> {
    let prefix = p.prefix.unwrap_or_else(|| "piece".to_string());
    let count = p.count.unwrap_or(20);
    let corpus = generate_corpus(&prefix, &p.config, count)?;
    let mut pieces = Vec::with_capacity(corpus.len());
    for piece in &corpus {
        store.save_poses(&piece.corrupted.poses)?;
        store.save_notes(&NoteList {
            piece_id: piece.piece_id.clone(),
            frame_rate_hz: piece.config.frame_rate_hz,
            notes: piece.corrupted.notes.clone(),
        })?;
        store.save_truth(&piece.truth.edited)?;
        pieces.push(json!({
            "piece_id": piece.piece_id,
            "seed": piece.config.seed,
            "ledger": piece.corrupted.ledger,
        }));
    }
    Ok(json!({ "config": p.config, "pieces": pieces }))
}

fn annotate(store: &CorpusStore, p: AnnotateParams) -> Result<Value> {
    let geo = store.geometry()?;
    let mut annotated = Vec::new();
    let mut initialized = 0;
    for id in selected(store, &p.piece_ids)? {
        let notes = match store.notes(&id) {
            Ok(n) => n,
            Err(ServiceError::NotFound(_)) => continue,
            Err(e) => return Err(e),
        };
        let poses = store.poses(&id)?;
        let rule = annotate_piece(&notes.notes, &poses, &geo, &p.rule, Timestamp::now())?;
        store.save_track(&rule)?;
        initialized += store.init_edited(&rule)? as usize;
        annotated.push(id);
    }
    Ok(json!({ "annotated": annotated, "edited_initialized": initialized }))
}

/// Edit ops that turn `edited` into `truth`.
pub fn diff_ops(edited: &FingeringTrack, truth: &FingeringTrack) -> Result<Vec<EditOp>> {
    let pairs = align_tracks(truth, edited)?;
    let mut ops = Vec::new();
    let mut used = vec![false; edited.notes.len()];
    for p in &pairs {
        match p.matched {
            Some(i) => {
                used[i] = true;
                if p.other_label != p.reference.label {
                    ops.push(EditOp::set_label(&edited.piece_id, &edited.notes[i].note_id, p.reference.label));
                }
            }
            None => ops.push(EditOp::add_note(
                &edited.piece_id,
                p.reference.key_index,
                p.reference.onset_frame,
                p.reference.offset_frame,
                p.reference.label,
            )),
        }
    }
    let deletes = edited
        .notes
        .iter()
        .zip(&used)
        .filter(|(_, u)| !**u)
        .map(|(n, _)| EditOp::delete_note(&edited.piece_id, &n.note_id));
    // Deletions first so re-added notes cannot collide with stale ones.
    Ok(deletes.chain(ops).collect())
}

fn oracle_review(store: &CorpusStore, p: OracleReviewParams) -> Result<Value> {
    let mut reviewed = Vec::new();
    let mut total_ops = 0;
    for id in selected(store, &p.piece_ids)? {
        let Some(truth) = store.truth(&id)? else { continue };
        let Some(edited) = store.track(&id, TrackKind::Edited)? else { continue };
        let ops = diff_ops(&edited, &truth)?;
        for op in &ops {
            store.apply_edit(&id, op)?;
        }
        total_ops += ops.len();
        store.set_stage(&id, p.stage, true, Timestamp::now())?;
        reviewed.push(id);
    }
    Ok(json!({ "reviewed": reviewed, "ops": total_ops, "stage": p.stage }))
}

fn train(store: &CorpusStore, p: TrainParams) -> Result<Value> {
    let geo = store.geometry()?;
    let started_at = Timestamp::now();
    let mut sequences = Vec::new();
    let mut piece_ids = Vec::new();
    for id in selected(store, &p.piece_ids)? {
        let status = store.status(&id)?;
        if !status.r1.done {
            continue;
        }
        let (Some(edited), Some(rule)) = (
            store.track(&id, TrackKind::Edited)?,
            store.track(&id, TrackKind::Rule)?,
        ) else {
            continue;
        };
        let poses = store.poses(&id)?;
        sequences.push(training_pair(&edited, &rule, &poses, &status, &geo, &p.rule)?);
        piece_ids.push(id);
    }
    if sequences.is_empty() {
        return Err(ServiceError::Prerequisite(
            "no piece has completed R1 review; training needs reviewed pairs".into(),
        ));
    }
    let (params, report) = train_with::<f32>(&p.config, &sequences, |e| {
        log::info!("epoch {}: loss {:.5}", e.epoch, e.mean);
    })?;
    let model = ProbeModel::new(p.config.clone(), params)?;
    model.save(&store.path("models", &model.model_id, ".json"))?;
    let manifest = TrainingManifest {
        model_id: model.model_id.clone(),
        piece_ids,
        seed: p.config.seed,
        config: p.config,
        started_at,
        finished_at: Timestamp::now(),
        epoch_losses: report.epochs,
    };
    manifest.save(&store.path("models", &model.model_id, ".manifest.json"))?;
    store.write_text("models/latest", &model.model_id)?;
    Ok(to_value(&manifest))
}

fn load_model(store: &CorpusStore, model_id: Option<&str>) -> Result<ProbeModel> {
    let id = match model_id {
        Some(id) => id.to_string(),
        None => std::fs::read_to_string(store.root().join("models/latest"))
            .map_err(|_| ServiceError::Prerequisite("no trained model; run train first".into()))?
            .trim()
            .to_string(),
    };
    if !id.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(ServiceError::BadRequest(format!("invalid model id {id}")));
    }
    let path = store.path("models", &id, ".json");
    if !path.exists() {
        return Err(ServiceError::NotFound(format!("model {id}")));
    }
    Ok(ProbeModel::load(&path)?)
}

fn infer(store: &CorpusStore, p: InferParams, job_id: &str) -> Result<Value> {
    p.gate.validate()?;
    let model = load_model(store, p.model_id.as_deref())?;
    let geo = store.geometry()?;
    let started_at = Timestamp::now();
    let mut pieces = Vec::new();
    let mut fired = 0;
    for id in selected(store, &p.piece_ids)? {
        let Some(rule) = store.track(&id, TrackKind::Rule)? else { continue };
        let poses = store.poses(&id)?;
        let sequence = inference_sequence(&rule, &poses, &geo, &p.rule)?;
        let outputs = model.predict(&sequence)?;
        let dists: Vec<ClassDistribution> = outputs.iter().map(ClassDistribution::from).collect();
        let produced_at = Timestamp::now();
        let (probe, decisions) = apply_gate(&dists, &rule, &p.gate, &model.model_id, produced_at)?;
        store.save_track(&probe)?;
        store.save_probe_outputs(&id, &outputs, &decisions)?;
        store.update_status(&id, |s| {
            s.probe_runs.push(ProbeRun {
                model_id: model.model_id.clone(),
                produced_at,
            })
        })?;
        fired += decisions.iter().filter(|d| d.fired).count();
        pieces.push(id);
    }
    let manifest = InferenceManifest {
        model_id: model.model_id.clone(),
        piece_ids: pieces,
        gate: p.gate,
        started_at,
        produced_at: Timestamp::now(),
    };
    store.write_json(&format!("runs/{job_id}.inference.json"), &manifest)?;
    Ok(json!({ "manifest": manifest, "fired": fired }))
}

fn gate_inputs(store: &CorpusStore, ids: &Option<Vec<String>>, reviewed_only: bool) -> Result<(Vec<String>, Vec<GateInput>)> {
    let mut names = Vec::new();
    let mut inputs = Vec::new();
    for id in selected(store, ids)? {
        if reviewed_only && !store.status(&id)?.r1.done {
            continue;
        }
        let (Some(outputs), Some(rule), Some(edited)) = (
            store.probe_outputs(&id)?,
            store.track(&id, TrackKind::Rule)?,
            store.track(&id, TrackKind::Edited)?,
        ) else {
            continue;
        };
        inputs.push(GateInput {
            distributions: outputs.iter().map(ClassDistribution::from).collect(),
            rule,
            edited,
        });
        names.push(id);
    }
    if inputs.is_empty() {
        return Err(ServiceError::Prerequisite("no piece has probe outputs and an edited track to score".into()));
    }
    Ok((names, inputs))
}

fn eval(store: &CorpusStore, p: EvalParams) -> Result<Value> {
    let (_, inputs) = gate_inputs(store, &p.piece_ids, p.reviewed_only)?;
    let mut report = evaluate_gate(&inputs, &p.gate)?;
    report.bootstrap_lower95 = Some(cluster_bootstrap(&report.piece_counts(), p.resamples, p.seed)?);
    if let Some(deltas) = &p.seed_deltas {
        report = report.with_t_interval(&t_ci(deltas)?);
    }
    store.write_json("reports/eval.json", &report)?;
    Ok(to_value(&report))
}

fn sweep(store: &CorpusStore, p: SweepParams) -> Result<Value> {
    let (_, inputs) = gate_inputs(store, &p.piece_ids, p.reviewed_only)?;
    let rows = sweep_tau(&inputs, &p.taus, p.rho)?;
    store.write_json("reports/sweep.json", &rows)?;
    store.write_text("reports/sweep.csv", &sweep_csv(&rows))?;
    let flags: Vec<usize> = rows.iter().map(|r| r.report.counts.flags).collect();
    Ok(json!({ "taus": p.taus, "rho": p.rho, "flags": flags, "rows": rows }))
}

fn audit(store: &CorpusStore) -> Result<Value> {
    let statuses = store
        .piece_ids()?
        .iter()
        .map(|id| store.status(id))
        .collect::<Result<Vec<_>>>()?;
    let manifests = store
        .list("runs", ".inference.json")?
        .iter()
        .map(|path| Ok(fingerlab::corpus::read_json(path)?))
        .collect::<Result<Vec<InferenceManifest>>>()?;
    let rows = vintage_audit(&statuses, &manifests);
    let stale = rows.iter().filter(|r| r.stale).count();
    let out = json!({ "rows": rows, "stale": stale });
    store.write_json("reports/audit.json", &out)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Succeeded,
    Failed,
}

/// Record of one job, also written to `runs/{job_id}.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub kind: JobKind,
    pub state: JobState,
    pub params: Value,
    pub started_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Tracks submitted jobs.
pub struct JobRegistry {
    store: Arc<CorpusStore>,
    jobs: Mutex<HashMap<String, JobRecord>>,
    counter: AtomicU64,
}

impl JobRegistry {
    pub fn new(store: Arc<CorpusStore>) -> Self {
        JobRegistry {
            store,
            jobs: Mutex::new(HashMap::new()),
            counter: AtomicU64::new(0),
        }
    }

    pub fn store(&self) -> &Arc<CorpusStore> {
        &self.store
    }

    /// Registers a job as running and returns its record.
    pub fn start(&self, kind: JobKind, params: Value) -> JobRecord {
        let now = Timestamp::now();
        let n = self.counter.fetch_add(1, Ordering::SeqCst);
        let record = JobRecord {
            job_id: format!("{kind}-{}-{n}", now.as_millis()),
            kind,
            state: JobState::Running,
            params,
            started_at: now,
            finished_at: None,
            result: None,
            error: None,
        };
        self.jobs.lock().insert(record.job_id.clone(), record.clone());
        record
    }

    /// Runs a started job on the current thread and records the outcome.
    pub fn finish(&self, mut record: JobRecord) -> JobRecord {
        match run_job(&self.store, record.kind, &record.params, &record.job_id) {
            Ok(v) => {
                record.state = JobState::Succeeded;
                record.result = Some(v);
            }
            Err(e) => {
                log::warn!("job {} failed: {e}", record.job_id);
                record.state = JobState::Failed;
                record.error = Some(e.to_string());
            }
        }
        record.finished_at = Some(Timestamp::now());
        if let Err(e) = self.store.write_json(&format!("runs/{}.json", record.job_id), &record) {
            log::warn!("could not write job record {}: {e}", record.job_id);
        }
        self.jobs.lock().insert(record.job_id.clone(), record.clone());
        record
    }

    /// Runs a job to completion on the current thread.
    pub fn run(&self, kind: JobKind, params: Value) -> JobRecord {
        let record = self.start(kind, params);
        self.finish(record)
    }

    pub fn get(&self, job_id: &str) -> Result<JobRecord> {
        if let Some(r) = self.jobs.lock().get(job_id) {
            return Ok(r.clone());
        }
        if job_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            if let Some(r) = self.store.read_json(&format!("runs/{job_id}.json"))? {
                return Ok(r);
            }
        }
        Err(ServiceError::NotFound(format!("job {job_id}")))
    }
}
