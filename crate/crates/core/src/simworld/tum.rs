//! TUM trajectory text: `timestamp tx ty tz qx qy qz qw` per line.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::liegroup::Sim3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TumPose {
    pub timestamp: f64,
    pub translation: [f64; 3],
    /// `(qx, qy, qz, qw)`.
    pub rotation: [f64; 4],
}

impl TumPose {
    /// Position and rotation of `pose`; scale is dropped.
    pub fn from_sim3(timestamp: f64, pose: &Sim3) -> Self {
        let t = pose.translation();
        let q = pose.rotation().quaternion();
        Self {
            timestamp,
            translation: [t.x, t.y, t.z],
            rotation: [q.i, q.j, q.k, q.w],
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    pub fn orientation(&self) -> UnitQuaternion<f64> {
        let [x, y, z, w] = self.rotation;
        UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct TumError {
    pub line: usize,
    pub message: String,
}

pub fn format_tum(poses: &[TumPose]) -> String {
    let mut out = String::new();
    for p in poses {
        let [tx, ty, tz] = p.translation;
        let [qx, qy, qz, qw] = p.rotation;
        out.push_str(&format!(
            "{:.6} {tx:.9} {ty:.9} {tz:.9} {qx:.9} {qy:.9} {qz:.9} {qw:.9}\n",
            p.timestamp
        ));
    }
    out
}

/// Parses TUM text; `#` lines and blank lines are skipped.
pub fn parse_tum(text: &str) -> Result<Vec<TumPose>, TumError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = s
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e: std::num::ParseFloatError| TumError {
                line: i + 1,
                message: e.to_string(),
            })?;
        if v.len() != 8 {
            return Err(TumError {
                line: i + 1,
                message: format!("expected 8 fields, got {}", v.len()),
            });
        }
        out.push(TumPose {
            timestamp: v[0],
            translation: [v[1], v[2], v[3]],
            rotation: [v[4], v[5], v[6], v[7]],
        });
    }
    Ok(out)
}
