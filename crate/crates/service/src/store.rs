//! On-disk corpus directory.
//!
//! ```text
//! geometry.json            keyboard constants (optional)
//! poses/{id}.json          hand-pose track
//! notes/{id}.json          unlabeled notes, the rule annotator's input
//! truth/{id}.json          synthetic ground truth, when generated
//! rule/{id}.json           rule track
//! edited/{id}.json         edited track
//! edits/{id}.base.json     edited track as first copied from the rule track
//! edits/{id}.jsonl         committed edit log
//! probe/{id}.json          gated probe track
//! probe/{id}.outputs.json  per-note probe distributions
//! decisions/{id}.json      gate decisions
//! status/{id}.json         review status
//! backups/{id}.json        unsaved client edits
//! models/{model_id}.json   trained probe, with {model_id}.manifest.json
//! runs/{job_id}.json       job records and manifests
//! reports/                 evaluation, sweep and audit outputs
//! ```

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use fingerlab::corpus::{
    load_status, load_track, read_json, save_status, save_track, update_review_stage,
    FingeringTrack, NoteList, ReviewStage, ReviewStatus, Timestamp, TrackKind,
};
use fingerlab::gate::GateDecision;
use fingerlab::geometry::{HandPoseTrack, KeyboardGeometry};
use fingerlab::probe::{content_id, NoteOutput};

use crate::edits::{apply_op, replay, EditOp, LogEntry};
use crate::error::{Result, ServiceError};

pub struct CorpusStore {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceSummary {
    pub piece_id: String,
    pub num_notes: usize,
    pub num_frames: usize,
    pub has_rule: bool,
    pub has_edited: bool,
    pub has_probe: bool,
    pub edited_version: u64,
    pub status: ReviewStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackupBlob {
    pub piece_id: String,
    pub base_version: u64,
    #[serde(default)]
    pub pending: Vec<EditOp>,
    pub saved_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackupReceipt {
    pub blob_id: String,
    pub saved_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayConflict {
    /// Position of the op in the blob.
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note_id: Option<String>,
    pub reason: String,
}

/// Outcome of replaying a backup over the committed track. Nothing is
/// committed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestoreReport {
    pub blob: Option<BackupBlob>,
    pub current_version: u64,
    pub clean: bool,
    pub conflicts: Vec<ReplayConflict>,
    pub replayed: Option<FingeringTrack>,
}

fn read_optional<T: DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(read_json(path)?))
}

fn write<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    Ok(fingerlab::corpus::write_json(value, path)?)
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.')
}

impl CorpusStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| ServiceError::Log {
            path: root.clone(),
            message: e.to_string(),
        })?;
        Ok(CorpusStore {
            root,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, dir: &str, id: &str, ext: &str) -> PathBuf {
        self.root.join(dir).join(format!("{id}{ext}"))
    }

    /// Serializes mutations of one piece.
    pub fn lock(&self, piece_id: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .entry(piece_id.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(())))
            .clone()
    }

    pub fn geometry(&self) -> Result<KeyboardGeometry> {
        let path = self.root.join("geometry.json");
        if path.exists() {
            Ok(KeyboardGeometry::load(&path)?)
        } else {
            Ok(KeyboardGeometry::default())
        }
    }

    /// Pieces that have a pose track, sorted.
    pub fn piece_ids(&self) -> Result<Vec<String>> {
        let dir = self.root.join("poses");
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let entries = fs::read_dir(&dir).map_err(|e| ServiceError::Log {
            path: dir.clone(),
            message: e.to_string(),
        })?;
        let mut ids: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                name.strip_suffix(".json").map(str::to_string)
            })
            .filter(|id| valid_id(id))
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn ensure_piece(&self, piece_id: &str) -> Result<()> {
        if valid_id(piece_id) && self.path("poses", piece_id, ".json").exists() {
            Ok(())
        } else {
            Err(ServiceError::NotFound(format!("piece {piece_id}")))
        }
    }

    pub fn poses(&self, piece_id: &str) -> Result<HandPoseTrack> {
        self.ensure_piece(piece_id)?;
        Ok(HandPoseTrack::load(self.path("poses", piece_id, ".json"))?)
    }

    pub fn save_poses(&self, poses: &HandPoseTrack) -> Result<()> {
        if !valid_id(&poses.piece_id) {
            return Err(ServiceError::BadRequest(format!("invalid piece id {:?}", poses.piece_id)));
        }
        Ok(poses.save(self.path("poses", &poses.piece_id, ".json"))?)
    }

    pub fn notes(&self, piece_id: &str) -> Result<NoteList> {
        let path = self.path("notes", piece_id, ".json");
        read_optional(&path)?.ok_or_else(|| ServiceError::NotFound(format!("notes of {piece_id}")))
    }

    pub fn save_notes(&self, notes: &NoteList) -> Result<()> {
        write(&self.path("notes", &notes.piece_id, ".json"), notes)
    }

    fn track_path(&self, piece_id: &str, kind: TrackKind) -> PathBuf {
        let dir = match kind {
            TrackKind::Rule => "rule",
            TrackKind::Edited => "edited",
            TrackKind::Probe => "probe",
        };
        self.path(dir, piece_id, ".json")
    }

    pub fn track(&self, piece_id: &str, kind: TrackKind) -> Result<Option<FingeringTrack>> {
        self.ensure_piece(piece_id)?;
        let path = self.track_path(piece_id, kind);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(load_track(path)?))
    }

    pub fn require_track(&self, piece_id: &str, kind: TrackKind) -> Result<FingeringTrack> {
        self.track(piece_id, kind)?
            .ok_or_else(|| ServiceError::NotFound(format!("{} track of {piece_id}", kind.as_str())))
    }

    pub fn save_track(&self, track: &FingeringTrack) -> Result<()> {
        if track.kind == TrackKind::Edited {
            return Err(ServiceError::BadRequest("edited tracks change only through edits".into()));
        }
        Ok(save_track(track, self.track_path(&track.piece_id, track.kind))?)
    }

    pub fn truth(&self, piece_id: &str) -> Result<Option<FingeringTrack>> {
        let path = self.path("truth", piece_id, ".json");
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(load_track(path)?))
    }

    pub fn save_truth(&self, track: &FingeringTrack) -> Result<()> {
        Ok(save_track(track, self.path("truth", &track.piece_id, ".json"))?)
    }

    pub fn status(&self, piece_id: &str) -> Result<ReviewStatus> {
        self.ensure_piece(piece_id)?;
        let path = self.path("status", piece_id, ".json");
        if path.exists() {
            Ok(load_status(path)?)
        } else {
            Ok(ReviewStatus::new(piece_id))
        }
    }

    pub fn set_stage(&self, piece_id: &str, stage: ReviewStage, done: bool, at: Timestamp) -> Result<ReviewStatus> {
        let lock = self.lock(piece_id);
        let _guard = lock.lock();
        let updated = update_review_stage(&self.status(piece_id)?, stage, done, at)?;
        save_status(&updated, self.path("status", piece_id, ".json"))?;
        Ok(updated)
    }

    pub fn save_status(&self, status: &ReviewStatus) -> Result<()> {
        status.validate()?;
        Ok(save_status(status, self.path("status", &status.piece_id, ".json"))?)
    }

    /// Modifies the status under the piece lock.
    pub fn update_status(&self, piece_id: &str, f: impl FnOnce(&mut ReviewStatus)) -> Result<ReviewStatus> {
        let lock = self.lock(piece_id);
        let _guard = lock.lock();
        let mut status = self.status(piece_id)?;
        f(&mut status);
        self.save_status(&status)?;
        Ok(status)
    }

    // Edited track and edit log.

    pub fn edit_log(&self, piece_id: &str) -> Result<Vec<LogEntry>> {
        let path = self.path("edits", piece_id, ".jsonl");
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path).map_err(|e| ServiceError::Log {
            path: path.clone(),
            message: e.to_string(),
        })?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| ServiceError::Log {
                    path: path.clone(),
                    message: format!("line {}: {e}", i + 1),
                })
            })
            .collect()
    }

    pub fn edited_version(&self, piece_id: &str) -> Result<u64> {
        Ok(self.edit_log(piece_id)?.last().map_or(0, |e| e.version))
    }

    pub fn edited_base(&self, piece_id: &str) -> Result<Option<FingeringTrack>> {
        let path = self.path("edits", piece_id, ".base.json");
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(load_track(path)?))
    }

    /// Starts review of a piece: the edited track becomes a copy of the rule
    /// track. Does nothing if the piece already has an edited track.
    pub fn init_edited(&self, rule: &FingeringTrack) -> Result<bool> {
        let lock = self.lock(&rule.piece_id);
        let _guard = lock.lock();
        let path = self.track_path(&rule.piece_id, TrackKind::Edited);
        if path.exists() {
            return Ok(false);
        }
        let mut base = rule.clone();
        base.kind = TrackKind::Edited;
        base.model_id = None;
        save_track(&base, self.path("edits", &rule.piece_id, ".base.json"))?;
        save_track(&base, &path)?;
        Ok(true)
    }

    /// Commits one edit: validates, appends to the log, then replaces the
    /// edited track atomically.
    pub fn apply_edit(&self, piece_id: &str, op: &EditOp) -> Result<(FingeringTrack, u64)> {
        if op.piece_id != piece_id {
            return Err(ServiceError::BadRequest(format!(
                "edit for {} posted to {piece_id}",
                op.piece_id
            )));
        }
        let lock = self.lock(piece_id);
        let _guard = lock.lock();
        let current = self.require_track(piece_id, TrackKind::Edited)?;
        let version = self.edited_version(piece_id)?;
        if let Some(client) = op.base_version {
            if client != version {
                return Err(ServiceError::VersionConflict {
                    client,
                    current: version,
                });
            }
        }
        let (mut next, touched) = apply_op(&current, op)?;
        let entry = LogEntry {
            version: version + 1,
            applied_at: Timestamp::now().max(current.produced_at),
            op: op.clone(),
            touched,
        };
        next.produced_at = entry.applied_at;
        let log_path = self.path("edits", piece_id, ".jsonl");
        let mut line = serde_json::to_string(&entry).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        line.push('\n');
        if let Some(dir) = log_path.parent() {
            fs::create_dir_all(dir).map_err(|e| ServiceError::Log {
                path: dir.to_path_buf(),
                message: e.to_string(),
            })?;
        }
        let log_err = |e: std::io::Error| ServiceError::Log {
            path: log_path.clone(),
            message: e.to_string(),
        };
        let mut file = OpenOptions::new().create(true).append(true).open(&log_path).map_err(log_err)?;
        file.write_all(line.as_bytes()).map_err(log_err)?;
        file.sync_data().map_err(log_err)?;
        save_track(&next, self.track_path(piece_id, TrackKind::Edited))?;
        Ok((next, entry.version))
    }

    /// Edited track rebuilt from its base and the log.
    pub fn replay_edited(&self, piece_id: &str) -> Result<FingeringTrack> {
        let base = self
            .edited_base(piece_id)?
            .ok_or_else(|| ServiceError::NotFound(format!("edit base of {piece_id}")))?;
        replay(&base, &self.edit_log(piece_id)?)
    }

    // Backups.

    pub fn store_backup(&self, piece_id: &str, blob: &BackupBlob) -> Result<BackupReceipt> {
        self.ensure_piece(piece_id)?;
        if blob.piece_id != piece_id || blob.pending.iter().any(|op| op.piece_id != piece_id) {
            return Err(ServiceError::BadRequest(format!("backup does not belong to {piece_id}")));
        }
        let bytes = serde_json::to_vec(blob).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        write(&self.path("backups", piece_id, ".json"), blob)?;
        Ok(BackupReceipt {
            blob_id: content_id(&bytes),
            saved_at: blob.saved_at,
        })
    }

    pub fn backup(&self, piece_id: &str) -> Result<Option<BackupBlob>> {
        self.ensure_piece(piece_id)?;
        read_optional(&self.path("backups", piece_id, ".json"))
    }

    /// Replays the stored backup over the committed edited track. Ops that
    /// touch a note changed after the blob's base version, or that no longer
    /// apply, are reported as conflicts and skipped.
    pub fn restore(&self, piece_id: &str) -> Result<RestoreReport> {
        let blob = self.backup(piece_id)?;
        let log = self.edit_log(piece_id)?;
        let current_version = log.last().map_or(0, |e| e.version);
        let Some(blob) = blob else {
            return Ok(RestoreReport {
                blob: None,
                current_version,
                clean: true,
                conflicts: Vec::new(),
                replayed: None,
            });
        };
        let mut track = self.require_track(piece_id, TrackKind::Edited)?;
        let changed: Vec<&str> = log
            .iter()
            .filter(|e| e.version > blob.base_version)
            .flat_map(|e| e.touched.iter().map(String::as_str))
            .collect();
        let mut conflicts = Vec::new();
        for (index, op) in blob.pending.iter().enumerate() {
            if let Some(id) = op.note_id.as_deref().filter(|id| changed.contains(id)) {
                conflicts.push(ReplayConflict {
                    index,
                    note_id: Some(id.to_string()),
                    reason: format!("note changed after version {}", blob.base_version),
                });
                continue;
            }
            match apply_op(&track, op) {
                Ok((next, _)) => track = next,
                Err(e) => conflicts.push(ReplayConflict {
                    index,
                    note_id: op.note_id.clone(),
                    reason: e.to_string(),
                }),
            }
        }
        Ok(RestoreReport {
            blob: Some(blob),
            current_version,
            clean: conflicts.is_empty(),
            conflicts,
            replayed: Some(track),
        })
    }

    // Probe outputs.

    pub fn save_probe_outputs(
        &self,
        piece_id: &str,
        outputs: &[NoteOutput],
        decisions: &[GateDecision],
    ) -> Result<()> {
        let probs: Vec<StoredOutput> = outputs
            .iter()
            .map(|o| StoredOutput {
                class_probs: o.class_probs.to_vec(),
                correction_prob: o.correction_prob,
            })
            .collect();
        write(&self.path("probe", piece_id, ".outputs.json"), &probs)?;
        write(&self.path("decisions", piece_id, ".json"), &decisions)
    }

    pub fn probe_outputs(&self, piece_id: &str) -> Result<Option<Vec<NoteOutput>>> {
        let stored: Option<Vec<StoredOutput>> = read_optional(&self.path("probe", piece_id, ".outputs.json"))?;
        stored
            .map(|v| {
                v.into_iter()
                    .map(|s| {
                        let class_probs: [f64; 11] = s.class_probs.try_into().map_err(|_| {
                            ServiceError::BadRequest(format!("probe outputs of {piece_id} are malformed"))
                        })?;
                        Ok(NoteOutput {
                            class_probs,
                            correction_prob: s.correction_prob,
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn decisions(&self, piece_id: &str) -> Result<Option<Vec<GateDecision>>> {
        self.ensure_piece(piece_id)?;
        read_optional(&self.path("decisions", piece_id, ".json"))
    }

    pub fn summary(&self, piece_id: &str) -> Result<PieceSummary> {
        let poses = self.poses(piece_id)?;
        let num_notes = match self.notes(piece_id) {
            Ok(n) => n.notes.len(),
            Err(ServiceError::NotFound(_)) => 0,
            Err(e) => return Err(e),
        };
        Ok(PieceSummary {
            piece_id: piece_id.to_string(),
            num_notes,
            num_frames: poses.frames.len(),
            has_rule: self.track_path(piece_id, TrackKind::Rule).exists(),
            has_edited: self.track_path(piece_id, TrackKind::Edited).exists(),
            has_probe: self.track_path(piece_id, TrackKind::Probe).exists(),
            edited_version: self.edited_version(piece_id)?,
            status: self.status(piece_id)?,
        })
    }

    pub fn write_json<T: Serialize>(&self, relative: &str, value: &T) -> Result<PathBuf> {
        let path = self.root.join(relative);
        write(&path, value)?;
        Ok(path)
    }

    pub fn read_json<T: DeserializeOwned>(&self, relative: &str) -> Result<Option<T>> {
        read_optional(&self.root.join(relative))
    }

    pub fn write_text(&self, relative: &str, text: &str) -> Result<PathBuf> {
        let path = self.root.join(relative);
        fingerlab::corpus::write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    /// Files in `dir` ending in `suffix`, sorted by name.
    pub fn list(&self, dir: &str, suffix: &str) -> Result<Vec<PathBuf>> {
        let dir = self.root.join(dir);
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut out: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| ServiceError::Log {
                path: dir.clone(),
                message: e.to_string(),
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(suffix))
            .collect();
        out.sort();
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredOutput {
    class_probs: Vec<f64>,
    correction_prob: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use fingerlab::corpus::{FingerLabel, NoteRecord};
    use fingerlab::geometry::NUM_TIPS;

    fn label(c: u8) -> FingerLabel {
        FingerLabel::new(c).unwrap()
    }

    fn seeded() -> (tempfile::TempDir, CorpusStore) {
        let dir = tempfile::tempdir().unwrap();
        let store = CorpusStore::open(dir.path()).unwrap();
        store
            .save_poses(&HandPoseTrack {
                piece_id: "p".into(),
                frame_rate_hz: 30.0,
                frames: vec![[[0.0, 0.0, 40.0]; NUM_TIPS]; 30],
            })
            .unwrap();
        let rule = FingeringTrack::new(
            "p",
            TrackKind::Rule,
            30.0,
            Timestamp::from_millis(0),
            vec![
                NoteRecord::new("n0", 40, 0, 10, label(7)),
                NoteRecord::new("n1", 42, 12, 20, label(8)),
            ],
        )
        .unwrap();
        store.save_track(&rule).unwrap();
        assert!(store.init_edited(&rule).unwrap());
        (dir, store)
    }

    #[test]
    fn edits_are_logged_and_replayable() {
        let (_dir, store) = seeded();
        store.apply_edit("p", &EditOp::set_label("p", "n0", label(6))).unwrap();
        store.apply_edit("p", &EditOp::set_label_from("p", "n1", label(9), 15)).unwrap();
        let (track, version) = store.apply_edit("p", &EditOp::add_note("p", 50, 3, 8, label(10))).unwrap();
        assert_eq!(version, 3);
        let on_disk = store.require_track("p", TrackKind::Edited).unwrap();
        assert_eq!(on_disk, track);
        assert_eq!(
            store.replay_edited("p").unwrap().to_json_bytes().unwrap(),
            on_disk.to_json_bytes().unwrap()
        );
    }

    #[test]
    fn init_edited_keeps_existing_track() {
        let (_dir, store) = seeded();
        store.apply_edit("p", &EditOp::set_label("p", "n0", label(1))).unwrap();
        let rule = store.require_track("p", TrackKind::Rule).unwrap();
        assert!(!store.init_edited(&rule).unwrap());
        assert_eq!(store.edited_version("p").unwrap(), 1);
    }

    #[test]
    fn stale_base_version_is_a_conflict() {
        let (_dir, store) = seeded();
        store.apply_edit("p", &EditOp::set_label("p", "n0", label(1))).unwrap();
        let op = EditOp {
            base_version: Some(0),
            ..EditOp::set_label("p", "n1", label(2))
        };
        assert!(matches!(
            store.apply_edit("p", &op),
            Err(ServiceError::VersionConflict { client: 0, current: 1 })
        ));
    }

    #[test]
    fn failed_edit_changes_nothing() {
        let (_dir, store) = seeded();
        let before = store.require_track("p", TrackKind::Edited).unwrap();
        assert!(store.apply_edit("p", &EditOp::add_note("p", 40, 0, 4, label(1))).is_err());
        assert_eq!(store.require_track("p", TrackKind::Edited).unwrap(), before);
        assert_eq!(store.edited_version("p").unwrap(), 0);
    }

    fn blob(base_version: u64, pending: Vec<EditOp>) -> BackupBlob {
        BackupBlob {
            piece_id: "p".into(),
            base_version,
            pending,
            saved_at: Timestamp::from_millis(9),
        }
    }

    #[test]
    fn restore_over_unchanged_base_is_clean() {
        let (_dir, store) = seeded();
        store
            .store_backup("p", &blob(0, vec![EditOp::set_label("p", "n1", label(3))]))
            .unwrap();
        let report = store.restore("p").unwrap();
        assert!(report.clean);
        let replayed = report.replayed.unwrap();
        assert_eq!(replayed.notes[replayed.find("n1").unwrap()].label, label(3));
        // Nothing committed.
        assert_eq!(store.edited_version("p").unwrap(), 0);
    }

    #[test]
    fn restore_reports_conflicting_note() {
        let (_dir, store) = seeded();
        store
            .store_backup("p", &blob(0, vec![EditOp::set_label("p", "n0", label(3)), EditOp::set_label("p", "n1", label(4))]))
            .unwrap();
        store.apply_edit("p", &EditOp::set_label("p", "n0", label(2))).unwrap();
        let report = store.restore("p").unwrap();
        assert!(!report.clean);
        assert_eq!(report.conflicts.len(), 1);
        assert_eq!(report.conflicts[0].note_id.as_deref(), Some("n0"));
    }

    #[test]
    fn empty_backup_is_a_no_op() {
        let (_dir, store) = seeded();
        let report = store.restore("p").unwrap();
        assert!(report.clean && report.blob.is_none());
        store.store_backup("p", &blob(0, vec![])).unwrap();
        let report = store.restore("p").unwrap();
        assert!(report.clean);
        assert_eq!(report.replayed.unwrap(), store.require_track("p", TrackKind::Edited).unwrap());
    }

    #[test]
    fn unknown_and_unsafe_piece_ids() {
        let (_dir, store) = seeded();
        assert!(matches!(store.poses("q"), Err(ServiceError::NotFound(_))));
        assert!(matches!(store.poses("../p"), Err(ServiceError::NotFound(_))));
        assert_eq!(store.piece_ids().unwrap(), vec!["p"]);
    }

    #[test]
    fn concurrent_edits_serialize() {
        let (_dir, store) = seeded();
        let store = Arc::new(store);
        let handles: Vec<_> = (0..8u8)
            .map(|i| {
                let store = store.clone();
                std::thread::spawn(move || {
                    store
                        .apply_edit("p", &EditOp::add_note("p", 60 + i, 5, 9, label(1 + i % 10)))
                        .unwrap()
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let log = store.edit_log("p").unwrap();
        assert_eq!(log.iter().map(|e| e.version).collect::<Vec<_>>(), (1..=8).collect::<Vec<_>>());
        assert_eq!(store.replay_edited("p").unwrap(), store.require_track("p", TrackKind::Edited).unwrap());
    }
}
