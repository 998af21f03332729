//! Trajectory and map quality metrics.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::GaussianPrimitive;
use crate::liegroup::Sim3;
use crate::registration::umeyama;
use crate::simworld::TumPose;
use crate::voxel::voxel_key;

/// Maximum timestamp gap for associating an estimated pose with ground truth.
pub const MAX_TIME_GAP: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    Sim3,
    Se3,
}

impl FromStr for Alignment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sim3" => Ok(Self::Sim3),
            "se3" => Ok(Self::Se3),
            other => Err(format!("unknown alignment {other:?}, expected sim3 or se3")),
        }
    }
}

impl fmt::Display for Alignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sim3 => "sim3",
            Self::Se3 => "se3",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AteError {
    #[error("{0} matched poses, need at least 3")]
    TooFewMatches(usize),
    #[error("alignment failed: {0}")]
    Alignment(String),
}

/// Pairs each estimated position with the ground-truth pose nearest in time,
/// if within [`MAX_TIME_GAP`].
pub fn associate(est: &[TumPose], gt: &[TumPose]) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    let mut sorted: Vec<&TumPose> = gt.iter().collect();
    sorted.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    est.iter()
        .filter_map(|e| {
            let i = sorted.partition_point(|g| g.timestamp < e.timestamp);
            [i.checked_sub(1), Some(i)]
                .into_iter()
                .flatten()
                .filter_map(|j| sorted.get(j))
                .map(|g| ((g.timestamp - e.timestamp).abs(), g))
                .filter(|(d, _)| *d <= MAX_TIME_GAP)
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, g)| (e.position(), g.position()))
        })
        .collect()
}

/// Aligns estimated positions onto ground truth and returns the position RMSE
/// in centimeters (inputs in meters). SE(3) mode keeps the closed-form
/// rotation and refits the translation with unit scale.
pub fn ate_rmse(est: &[TumPose], gt: &[TumPose], mode: Alignment) -> Result<f64, AteError> {
    let pairs = associate(est, gt);
    if pairs.len() < 3 {
        return Err(AteError::TooFewMatches(pairs.len()));
    }
    let (src, tgt): (Vec<Vector3<f64>>, Vec<Vector3<f64>>) = pairs.into_iter().unzip();
    let sim = umeyama(&src, &tgt).map_err(|e| AteError::Alignment(e.to_string()))?;
    let align = match mode {
        Alignment::Sim3 => sim,
        Alignment::Se3 => {
            let n = src.len() as f64;
            let mean_s = src.iter().sum::<Vector3<f64>>() / n;
            let mean_t = tgt.iter().sum::<Vector3<f64>>() / n;
            Sim3::new(1.0, *sim.rotation(), mean_t - sim.rotation() * mean_s)
        }
    };
    let sq: f64 = src
        .iter()
        .zip(&tgt)
        .map(|(s, t)| (align.act(s) - t).norm_squared())
        .sum();
    Ok(100.0 * (sq / src.len() as f64).sqrt())
}

/// Fraction of `surface` voxel keys holding at least one Gaussian mean after
/// mapping by `to_world`.
pub fn coverage(
    gaussians: &[GaussianPrimitive],
    to_world: &Sim3,
    surface: &BTreeSet<u64>,
    voxel: f64,
) -> f64 {
    if surface.is_empty() {
        return 0.0;
    }
    let hit: BTreeSet<u64> = gaussians
        .iter()
        .filter_map(|g| voxel_key(&to_world.act(&g.mean), voxel).ok())
        .filter(|k| surface.contains(k))
        .collect();
    hit.len() as f64 / surface.len() as f64
}

/// Fraction of `borrowed` means that fall in a voxel holding a `target` mean.
pub fn duplicate_fraction(
    target: &[GaussianPrimitive],
    borrowed: &[GaussianPrimitive],
    voxel: f64,
) -> f64 {
    if borrowed.is_empty() {
        return 0.0;
    }
    let occupied: BTreeSet<u64> = target
        .iter()
        .filter_map(|g| voxel_key(&g.mean, voxel).ok())
        .collect();
    let dup = borrowed
        .iter()
        .filter(|g| voxel_key(&g.mean, voxel).is_ok_and(|k| occupied.contains(&k)))
        .count();
    dup as f64 / borrowed.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    fn line(n: usize) -> Vec<TumPose> {
        (0..n)
            .map(|i| {
                let t = i as f64;
                TumPose {
                    timestamp: 0.5 * t,
                    translation: [t.cos(), (0.7 * t).sin(), 0.1 * t],
                    rotation: [0.0, 0.0, 0.0, 1.0],
                }
            })
            .collect()
    }

    #[test]
    fn identical_is_zero_and_scale_is_absorbed() {
        let gt = line(20);
        assert!(ate_rmse(&gt, &gt, Alignment::Sim3).unwrap() < 1e-9);
        let doubled: Vec<TumPose> = gt
            .iter()
            .map(|p| TumPose {
                translation: p.translation.map(|v| 2.0 * v),
                ..*p
            })
            .collect();
        assert!(ate_rmse(&doubled, &gt, Alignment::Sim3).unwrap() < 1e-9);
        assert!(ate_rmse(&doubled, &gt, Alignment::Se3).unwrap() > 1.0);
        assert_eq!(
            ate_rmse(&gt[..2], &gt, Alignment::Sim3),
            Err(AteError::TooFewMatches(2))
        );
    }

    #[test]
    fn association_respects_time_gap() {
        let gt = line(5);
        let mut est = gt.clone();
        est[1].timestamp += 0.015;
        est[2].timestamp += 0.03;
        assert_eq!(associate(&est, &gt).len(), 4);
    }

    #[test]
    fn duplicate_fraction_counts_shared_voxels() {
        let g = |x: f64| GaussianPrimitive {
            mean: Vector3::new(x, 0.05, 0.05),
            scales: Vector3::repeat(0.01),
            rotation: UnitQuaternion::identity(),
            opacity: 1.0,
            color: [0.5; 3],
        };
        let f = duplicate_fraction(&[g(0.05)], &[g(0.06), g(0.55)], 0.1);
        assert!((f - 0.5).abs() < 1e-15);
    }
}
