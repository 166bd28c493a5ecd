use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_json, write_json};
use crate::error::{Error, Result};

/// Number of tracked fingertips: L1..L5 then R1..R5.
pub const NUM_TIPS: usize = 10;

pub type Point3 = [f64; 3];

/// Fingertip positions for one motion frame, in pose-frame tip order.
pub type PoseFrame = [Point3; NUM_TIPS];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandPoseTrack {
    pub piece_id: String,
    pub frame_rate_hz: f64,
    pub frames: Vec<PoseFrame>,
}

impl HandPoseTrack {
    pub fn frame(&self, frame: u32) -> Result<&PoseFrame> {
        self.frames.get(frame as usize).ok_or(Error::Coverage {
            frame,
            available: self.frames.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate_hz.is_finite() && self.frame_rate_hz > 0.0) {
            return Err(Error::Validation(format!(
                "pose track {}: frame rate {} is not positive",
                self.piece_id, self.frame_rate_hz
            )));
        }
        if let Some(i) = self
            .frames
            .iter()
            .position(|f| f.iter().flatten().any(|v| !v.is_finite()))
        {
            return Err(Error::Validation(format!(
                "pose track {}: non-finite coordinate in frame {i}",
                self.piece_id
            )));
        }
        Ok(())
    }

    /// Frames `[from, to)` clamped to the track.
    pub fn slice(&self, from: usize, to: usize) -> &[PoseFrame] {
        let to = to.min(self.frames.len());
        &self.frames[from.min(to)..to]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let track: HandPoseTrack = read_json(path)?;
        track.validate()?;
        Ok(track)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(self, path)
    }
}
