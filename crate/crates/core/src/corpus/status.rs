use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::time::Timestamp;
use super::track::{read_json, write_json};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReviewStage {
    R1,
    R2,
    R3,
}

impl ReviewStage {
    pub const ALL: [ReviewStage; 3] = [ReviewStage::R1, ReviewStage::R2, ReviewStage::R3];
}

impl fmt::Display for ReviewStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReviewStage::R1 => "R1",
            ReviewStage::R2 => "R2",
            ReviewStage::R3 => "R3",
        })
    }
}

impl std::str::FromStr for ReviewStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "R1" => Ok(ReviewStage::R1),
            "R2" => Ok(ReviewStage::R2),
            "R3" => Ok(ReviewStage::R3),
            _ => Err(Error::Validation(format!("unknown review stage {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageState {
    pub done: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed_at: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRun {
    pub model_id: String,
    pub produced_at: Timestamp,
}

/// Per-piece review state: three passes plus the probe runs that touched
/// the piece.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewStatus {
    pub piece_id: String,
    pub r1: StageState,
    pub r2: StageState,
    pub r3: StageState,
    #[serde(default)]
    pub probe_runs: Vec<ProbeRun>,
}

impl ReviewStatus {
    pub fn new(piece_id: impl Into<String>) -> Self {
        ReviewStatus {
            piece_id: piece_id.into(),
            r1: StageState::default(),
            r2: StageState::default(),
            r3: StageState::default(),
            probe_runs: Vec::new(),
        }
    }

    pub fn stage(&self, stage: ReviewStage) -> &StageState {
        match stage {
            ReviewStage::R1 => &self.r1,
            ReviewStage::R2 => &self.r2,
            ReviewStage::R3 => &self.r3,
        }
    }

    fn stage_mut(&mut self, stage: ReviewStage) -> &mut StageState {
        match stage {
            ReviewStage::R1 => &mut self.r1,
            ReviewStage::R2 => &mut self.r2,
            ReviewStage::R3 => &mut self.r3,
        }
    }

    pub fn is_done(&self, stage: ReviewStage) -> bool {
        self.stage(stage).done
    }

    pub fn latest_probe_run(&self) -> Option<&ProbeRun> {
        self.probe_runs.iter().max_by_key(|r| r.produced_at)
    }

    pub fn validate(&self) -> Result<()> {
        for stage in ReviewStage::ALL {
            let s = self.stage(stage);
            if s.done && s.completed_at.is_none() {
                return Err(Error::Validation(format!(
                    "{}: {stage} done without completed_at",
                    self.piece_id
                )));
            }
        }
        for stage in [ReviewStage::R2, ReviewStage::R3] {
            if self.is_done(stage) && !self.r1.done {
                return Err(Error::StageOrder(format!(
                    "{}: {stage} done before R1",
                    self.piece_id
                )));
            }
        }
        Ok(())
    }
}

/// Marks `stage` done (with timestamp `at`) or not done. R2 and R3 need R1;
/// R3 does not need R2. Clearing R1 while a later stage is done is refused.
pub fn update_review_stage(
    status: &ReviewStatus,
    stage: ReviewStage,
    done: bool,
    at: Timestamp,
) -> Result<ReviewStatus> {
    if done && stage != ReviewStage::R1 && !status.r1.done {
        return Err(Error::StageOrder(format!(
            "{}: cannot complete {stage} before R1",
            status.piece_id
        )));
    }
    if !done && stage == ReviewStage::R1 && (status.r2.done || status.r3.done) {
        return Err(Error::StageOrder(format!(
            "{}: cannot reopen R1 while a later pass is done",
            status.piece_id
        )));
    }
    let mut next = status.clone();
    *next.stage_mut(stage) = StageState {
        done,
        completed_at: done.then_some(at),
    };
    next.validate()?;
    Ok(next)
}

pub fn load_status(path: impl AsRef<Path>) -> Result<ReviewStatus> {
    let status: ReviewStatus = read_json(path)?;
    status.validate()?;
    Ok(status)
}

pub fn save_status(status: &ReviewStatus, path: impl AsRef<Path>) -> Result<()> {
    status.validate()?;
    write_json(status, path)
}
