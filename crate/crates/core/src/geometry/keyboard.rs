use serde::{Deserialize, Serialize};

use crate::corpus::NUM_KEYS;
use crate::error::{Error, Result};

/// MIDI pitch of key index 0 (A0).
pub const KEY0_PITCH: u8 = 21;

/// Physical constants of the keyboard, all in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConstants {
    pub octave_span_mm: f64,
    pub white_key_length_mm: f64,
    pub black_key_length_mm: f64,
    pub black_key_height_mm: f64,
    #[serde(default = "default_black_width")]
    pub black_key_width_mm: f64,
}

fn default_black_width() -> f64 {
    13.7
}

impl Default for GeometryConstants {
    fn default() -> Self {
        GeometryConstants {
            octave_span_mm: 165.0,
            white_key_length_mm: 150.0,
            black_key_length_mm: 95.0,
            black_key_height_mm: 12.5,
            black_key_width_mm: default_black_width(),
        }
    }
}

impl GeometryConstants {
    pub fn white_key_width_mm(&self) -> f64 {
        self.octave_span_mm / 7.0
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.octave_span_mm,
            self.white_key_length_mm,
            self.black_key_length_mm,
            self.black_key_height_mm,
            self.black_key_width_mm,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("geometry constants must be positive".into()));
        }
        if self.black_key_length_mm >= self.white_key_length_mm {
            return Err(Error::Config("black keys must be shorter than white keys".into()));
        }
        if self.black_key_width_mm >= self.white_key_width_mm() {
            return Err(Error::Config("black keys must be narrower than white keys".into()));
        }
        Ok(())
    }
}

/// Axis-aligned box of one key. x runs along pitch, y from the front edge
/// (0) to the back, z is the resting surface height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub surface_z: f64,
    pub is_black: bool,
}

impl KeyBox {
    pub fn x_center(&self) -> f64 {
        0.5 * (self.x_min + self.x_max)
    }

    pub fn y_center(&self) -> f64 {
        0.5 * (self.y_min + self.y_max)
    }

    pub fn y_half_length(&self) -> f64 {
        0.5 * (self.y_max - self.y_min)
    }
}

pub fn is_black_key(key_index: u8) -> bool {
    matches!((key_index + KEY0_PITCH) % 12, 1 | 3 | 6 | 8 | 10)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyboardGeometry {
    pub constants: GeometryConstants,
    keys: Vec<KeyBox>,
}

impl Default for KeyboardGeometry {
    fn default() -> Self {
        KeyboardGeometry::from_constants(GeometryConstants::default())
            .expect("default constants are valid")
    }
}

impl KeyboardGeometry {
    /// Lays out 88 keys: white keys tile the x axis from 0, black keys are
    /// centred on the boundary between their two white neighbours and sit at
    /// the back of the keybed.
    pub fn from_constants(constants: GeometryConstants) -> Result<Self> {
        constants.validate()?;
        let w = constants.white_key_width_mm();
        let half_black = 0.5 * constants.black_key_width_mm;
        let mut keys = Vec::with_capacity(NUM_KEYS as usize);
        let mut whites = 0usize;
        for k in 0..NUM_KEYS {
            if is_black_key(k) {
                let center = whites as f64 * w;
                keys.push(KeyBox {
                    x_min: center - half_black,
                    x_max: center + half_black,
                    y_min: constants.white_key_length_mm - constants.black_key_length_mm,
                    y_max: constants.white_key_length_mm,
                    surface_z: constants.black_key_height_mm,
                    is_black: true,
                });
            } else {
                keys.push(KeyBox {
                    x_min: whites as f64 * w,
                    x_max: (whites + 1) as f64 * w,
                    y_min: 0.0,
                    y_max: constants.white_key_length_mm,
                    surface_z: 0.0,
                    is_black: false,
                });
                whites += 1;
            }
        }
        Ok(KeyboardGeometry { constants, keys })
    }

    pub fn key(&self, key_index: u8) -> &KeyBox {
        &self.keys[key_index as usize]
    }

    pub fn keys(&self) -> &[KeyBox] {
        &self.keys
    }

    pub fn x_span(&self) -> f64 {
        let lo = self.keys.iter().map(|k| k.x_min).fold(f64::INFINITY, f64::min);
        let hi = self.keys.iter().map(|k| k.x_max).fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }

    /// The same keyboard shifted by `(dx, dy)` in the keybed plane.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let keys = self
            .keys
            .iter()
            .map(|k| KeyBox {
                x_min: k.x_min + dx,
                x_max: k.x_max + dx,
                y_min: k.y_min + dy,
                y_max: k.y_max + dy,
                ..*k
            })
            .collect();
        KeyboardGeometry {
            constants: self.constants,
            keys,
        }
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let constants: GeometryConstants = crate::corpus::read_json(path)?;
        Self::from_constants(constants)
    }
}
