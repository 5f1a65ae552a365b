//! The ordered 48-entry feature vector and its frozen column contract.
//!
//! Index layout (see `docs/feature-order.md` for the versioned table):
//!
//! | indices | content                                   |
//! |---------|-------------------------------------------|
//! | 0–2     | left eye gaze direction (x, y, z)         |
//! | 3–5     | right eye gaze direction (x, y, z)        |
//! | 6–7     | averaged gaze angles (radians)            |
//! | 8–10    | head pose translation (mm)                |
//! | 11–13   | head pose orientation (radians)           |
//! | 14–30   | action unit intensities, 0–5 scale        |
//! | 31–47   | action unit occurrences, binary           |
//!
//! The order is a contract: model files embed [`canonical_order_checksum`]
//! and refuse to predict under any other ordering.

use std::collections::HashMap;
use std::ops::{Index, Range};

use thiserror::Error;

/// Number of entries in a [`FeatureVector`].
pub const FEATURE_DIM: usize = 48;

/// The 17 action units that carry both an intensity and an occurrence
/// channel. AU28 is emitted as occurrence-only by the upstream toolkit and
/// is deliberately excluded so the two channel sets stay paired.
pub const AU_IDS: [&str; 17] = [
    "01", "02", "04", "05", "06", "07", "09", "10", "12", "14", "15", "17", "20", "23", "25",
    "26", "45",
];

/// Positions of the AU intensity entries (values in `[0, 5]`).
pub const AU_INTENSITY: Range<usize> = 14..31;
/// Positions of the AU occurrence entries (values in `{0, 1}`).
pub const AU_OCCURRENCE: Range<usize> = 31..48;

/// Source column names in canonical vector order: entry `i` of every
/// [`FeatureVector`] holds the value of column `CANONICAL_COLUMNS[i]`.
pub const CANONICAL_COLUMNS: [&str; FEATURE_DIM] = [
    "gaze_0_x",
    "gaze_0_y",
    "gaze_0_z",
    "gaze_1_x",
    "gaze_1_y",
    "gaze_1_z",
    "gaze_angle_x",
    "gaze_angle_y",
    "pose_Tx",
    "pose_Ty",
    "pose_Tz",
    "pose_Rx",
    "pose_Ry",
    "pose_Rz",
    "AU01_r",
    "AU02_r",
    "AU04_r",
    "AU05_r",
    "AU06_r",
    "AU07_r",
    "AU09_r",
    "AU10_r",
    "AU12_r",
    "AU14_r",
    "AU15_r",
    "AU17_r",
    "AU20_r",
    "AU23_r",
    "AU25_r",
    "AU26_r",
    "AU45_r",
    "AU01_c",
    "AU02_c",
    "AU04_c",
    "AU05_c",
    "AU06_c",
    "AU07_c",
    "AU09_c",
    "AU10_c",
    "AU12_c",
    "AU14_c",
    "AU15_c",
    "AU17_c",
    "AU20_c",
    "AU23_c",
    "AU25_c",
    "AU26_c",
    "AU45_c",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("missing feature column `{0}`")]
    MissingFeature(&'static str),
    #[error("value {value} out of range for `{name}`")]
    RangeViolation { name: &'static str, value: f64 },
}

/// One frame's features in canonical order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector([f64; FEATURE_DIM]);

impl FeatureVector {
    /// Wraps values already arranged in canonical order, enforcing the AU
    /// range invariants (intensities in `[0, 5]`, occurrences in `{0, 1}`).
    pub fn from_canonical(values: [f64; FEATURE_DIM]) -> Result<Self, FeatureError> {
        for i in AU_INTENSITY {
            let v = values[i];
            if !(0.0..=5.0).contains(&v) {
                return Err(FeatureError::RangeViolation {
                    name: CANONICAL_COLUMNS[i],
                    value: v,
                });
            }
        }
        for i in AU_OCCURRENCE {
            let v = values[i];
            if v != 0.0 && v != 1.0 {
                return Err(FeatureError::RangeViolation {
                    name: CANONICAL_COLUMNS[i],
                    value: v,
                });
            }
        }
        Ok(FeatureVector(values))
    }

    /// All-zero vector (valid: zero is inside every entry's range).
    pub fn zeros() -> Self {
        FeatureVector([0.0; FEATURE_DIM])
    }

    pub fn as_slice(&self) -> &[f64; FEATURE_DIM] {
        &self.0
    }

    /// Reasons this vector violates its invariants; empty means valid.
    pub fn validation_failures(&self) -> Vec<String> {
        let mut reasons = Vec::new();
        for (i, &v) in self.0.iter().enumerate() {
            if !v.is_finite() {
                reasons.push(format!("{}: non-finite value {v}", CANONICAL_COLUMNS[i]));
            }
        }
        for i in AU_INTENSITY {
            let v = self.0[i];
            if !(0.0..=5.0).contains(&v) {
                reasons.push(format!("{}: intensity {v} outside [0, 5]", CANONICAL_COLUMNS[i]));
            }
        }
        for i in AU_OCCURRENCE {
            let v = self.0[i];
            if v != 0.0 && v != 1.0 {
                reasons.push(format!("{}: occurrence {v} not binary", CANONICAL_COLUMNS[i]));
            }
        }
        reasons
    }

    /// True iff every entry is finite and the AU range invariants hold.
    pub fn is_valid(&self) -> bool {
        self.validation_failures().is_empty()
    }
}

impl Index<usize> for FeatureVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

/// Places named feature values into canonical order.
///
/// Every one of the 48 canonical columns must be present in the map; AU
/// entries are range-checked. Two maps with equal values always produce
/// equal vectors — the ordering comes from [`CANONICAL_COLUMNS`], never
/// from map iteration order.
pub fn assemble(named: &HashMap<&str, f64>) -> Result<FeatureVector, FeatureError> {
    let mut values = [0.0; FEATURE_DIM];
    for (i, name) in CANONICAL_COLUMNS.iter().enumerate() {
        values[i] = *named
            .get(name)
            .ok_or(FeatureError::MissingFeature(name))?;
    }
    FeatureVector::from_canonical(values)
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over a byte slice. Also used by the forest seeding scheme.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn checksum_of(columns: &[&str]) -> u64 {
    let mut h = FNV_OFFSET;
    for name in columns {
        for &b in name.as_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
        // Separator outside the column-name alphabet, so ("ab","c") and
        // ("a","bc") hash differently.
        h ^= 0xff;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Checksum of the canonical column order. Model files embed this value;
/// prediction refuses to run when it disagrees with the current build.
pub fn canonical_order_checksum() -> u64 {
    checksum_of(&CANONICAL_COLUMNS)
}
