use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of label classes, including the "missing" class 0.
pub const NUM_CLASSES: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Left,
    Right,
}

/// A fingering class in `0..=10`.
///
/// Class 0 is "missing". Classes 1–5 are the left hand, thumb to pinky;
/// classes 6–10 are the right hand, thumb to pinky. The same codec is used
/// for fingertip indices: tip `t` in a pose frame (ordered L1..L5, R1..R5)
/// corresponds to class `t + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct FingerLabel(u8);

impl FingerLabel {
    pub const MISSING: FingerLabel = FingerLabel(0);

    pub fn new(class_id: u8) -> Result<Self> {
        if (class_id as usize) < NUM_CLASSES {
            Ok(FingerLabel(class_id))
        } else {
            Err(Error::Validation(format!(
                "finger label {class_id} outside 0..=10"
            )))
        }
    }

    /// Label for `finger` (1 = thumb .. 5 = pinky) on `hand`.
    pub fn from_hand_finger(hand: Hand, finger: u8) -> Result<Self> {
        if !(1..=5).contains(&finger) {
            return Err(Error::Validation(format!("finger {finger} outside 1..=5")));
        }
        Ok(match hand {
            Hand::Left => FingerLabel(finger),
            Hand::Right => FingerLabel(finger + 5),
        })
    }

    /// Label of fingertip `tip` (0..10) in pose-frame order.
    pub fn from_tip(tip: usize) -> Self {
        assert!(tip < 10, "tip index {tip} out of range");
        FingerLabel(tip as u8 + 1)
    }

    pub fn class_id(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_missing(self) -> bool {
        self.0 == 0
    }

    pub fn hand(self) -> Option<Hand> {
        match self.0 {
            0 => None,
            1..=5 => Some(Hand::Left),
            _ => Some(Hand::Right),
        }
    }

    /// Finger number 1..=5 within the hand.
    pub fn finger(self) -> Option<u8> {
        match self.0 {
            0 => None,
            c @ 1..=5 => Some(c),
            c => Some(c - 5),
        }
    }

    /// Fingertip index 0..10 in pose-frame order.
    pub fn tip(self) -> Option<usize> {
        (self.0 > 0).then(|| self.0 as usize - 1)
    }
}

impl TryFrom<u8> for FingerLabel {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        FingerLabel::new(value)
    }
}

impl From<FingerLabel> for u8 {
    fn from(label: FingerLabel) -> u8 {
        label.0
    }
}

impl fmt::Display for FingerLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.hand(), self.finger()) {
            (Some(Hand::Left), Some(n)) => write!(f, "L{n}"),
            (Some(Hand::Right), Some(n)) => write!(f, "R{n}"),
            _ => f.write_str("-"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codec_is_total_and_round_trips() {
        assert!(FingerLabel::new(0).unwrap().is_missing());
        for c in 1..=10u8 {
            let label = FingerLabel::new(c).unwrap();
            let back = FingerLabel::from_hand_finger(label.hand().unwrap(), label.finger().unwrap())
                .unwrap();
            assert_eq!(back, label);
            assert_eq!(FingerLabel::from_tip(label.tip().unwrap()), label);
        }
        assert!(FingerLabel::new(11).is_err());
    }

    #[test]
    fn left_before_right() {
        assert_eq!(FingerLabel::new(1).unwrap().hand(), Some(Hand::Left));
        assert_eq!(FingerLabel::new(5).unwrap().finger(), Some(5));
        assert_eq!(FingerLabel::new(8).unwrap().hand(), Some(Hand::Right));
        assert_eq!(FingerLabel::new(8).unwrap().finger(), Some(3));
        assert_eq!(FingerLabel::new(8).unwrap().to_string(), "R3");
    }

    #[test]
    fn serde_rejects_out_of_range() {
        assert!(serde_json::from_str::<FingerLabel>("11").is_err());
        assert_eq!(serde_json::from_str::<FingerLabel>("7").unwrap().class_id(), 7);
    }
}
