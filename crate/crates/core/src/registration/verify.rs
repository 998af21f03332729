//! The joint verification predicate and its per-gate report.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::RegistrationError;
use crate::summary::Aabb;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerificationThresholds {
    pub scale_low: f64,
    pub scale_high: f64,
    pub min_inliers: usize,
    pub min_overlap_ratio: f64,
    pub max_residual: f64,
    pub min_fitness: f64,
    pub max_rmse: f64,
    pub tau_ext: f64,
}

impl Default for VerificationThresholds {
    fn default() -> Self {
        Self {
            scale_low: 0.33,
            scale_high: 3.0,
            min_inliers: 12,
            min_overlap_ratio: 0.25,
            max_residual: 0.20,
            min_fitness: 0.25,
            max_rmse: 0.20,
            tau_ext: 0.15,
        }
    }
}

/// Quantities the predicate inspects.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateInputs {
    pub scale: f64,
    pub inliers: usize,
    pub overlap_ratio: f64,
    pub inlier_rmse: f64,
    pub fitness: f64,
    pub icp_rmse: f64,
    pub extent_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub gate: String,
    pub value: f64,
    pub threshold: String,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub gates: Vec<GateResult>,
    pub accepted: bool,
}

impl GateReport {
    pub fn failed_gates(&self) -> Vec<&str> {
        self.gates
            .iter()
            .filter(|g| !g.passed)
            .map(|g| g.gate.as_str())
            .collect()
    }
}

/// Evaluates every gate; the estimate is accepted iff all pass.
pub fn verify(e: &GateInputs, th: &VerificationThresholds) -> GateReport {
    let gate = |name: &str, value: f64, threshold: String, passed: bool| GateResult {
        gate: name.to_string(),
        value,
        threshold,
        passed,
    };
    let gates = vec![
        gate(
            "scale_band",
            e.scale,
            format!("({}, {})", th.scale_low, th.scale_high),
            e.scale > th.scale_low && e.scale < th.scale_high,
        ),
        gate(
            "inlier_count",
            e.inliers as f64,
            format!(">= {}", th.min_inliers),
            e.inliers >= th.min_inliers,
        ),
        gate(
            "overlap_ratio",
            e.overlap_ratio,
            format!(">= {}", th.min_overlap_ratio),
            e.overlap_ratio >= th.min_overlap_ratio,
        ),
        gate(
            "inlier_residual",
            e.inlier_rmse,
            format!("<= {}", th.max_residual),
            e.inlier_rmse <= th.max_residual,
        ),
        gate(
            "icp_fitness",
            e.fitness,
            format!(">= {}", th.min_fitness),
            e.fitness >= th.min_fitness,
        ),
        gate(
            "icp_rmse",
            e.icp_rmse,
            format!("<= {}", th.max_rmse),
            e.icp_rmse <= th.max_rmse,
        ),
        gate(
            "extent_ratio",
            e.extent_ratio,
            format!(">= {}", th.tau_ext),
            e.extent_ratio >= th.tau_ext,
        ),
    ];
    let accepted = gates.iter().all(|g| g.passed);
    GateReport { gates, accepted }
}

fn extent(points: &[Vector3<f64>]) -> f64 {
    Aabb::from_points(points).map_or(0.0, |b| b.diagonal())
}

/// `min(ext(src inliers) / diag(src box), ext(tgt inliers) / diag(tgt box))`,
/// clamped to `[0, 1]`.
pub fn extent_ratio(
    src_inliers: &[Vector3<f64>],
    tgt_inliers: &[Vector3<f64>],
    src_aabb: &Aabb,
    tgt_aabb: &Aabb,
) -> Result<f64, RegistrationError> {
    let (ds, dt) = (src_aabb.diagonal(), tgt_aabb.diagonal());
    if ds <= 0.0 || dt <= 0.0 {
        return Err(RegistrationError::Degenerate(
            "bounding box diagonal is zero".into(),
        ));
    }
    let eta = (extent(src_inliers) / ds).min(extent(tgt_inliers) / dt);
    Ok(eta.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perfect() -> GateInputs {
        GateInputs {
            scale: 1.0,
            inliers: 100,
            overlap_ratio: 1.0,
            inlier_rmse: 0.0,
            fitness: 1.0,
            icp_rmse: 0.0,
            extent_ratio: 1.0,
        }
    }

    #[test]
    fn perfect_estimate_accepted() {
        assert!(verify(&perfect(), &VerificationThresholds::default()).accepted);
    }

    #[test]
    fn scale_outside_band_named() {
        let r = verify(
            &GateInputs {
                scale: 5.0,
                ..perfect()
            },
            &VerificationThresholds::default(),
        );
        assert!(!r.accepted);
        assert_eq!(r.failed_gates(), vec!["scale_band"]);
    }

    #[test]
    fn all_gates_reported_jointly() {
        let r = verify(
            &GateInputs {
                scale: 5.0,
                extent_ratio: 0.05,
                ..perfect()
            },
            &VerificationThresholds::default(),
        );
        assert_eq!(r.gates.len(), 7);
        assert_eq!(r.failed_gates(), vec!["scale_band", "extent_ratio"]);
    }

    #[test]
    fn extent_ratio_cases() {
        let b = Aabb::new(Vector3::zeros(), Vector3::new(1.0, 2.0, 3.0));
        let full = vec![b.min, b.max];
        assert!((extent_ratio(&full, &full, &b, &b).unwrap() - 1.0).abs() < 1e-15);
        let one = vec![Vector3::new(0.5, 0.5, 0.5)];
        assert_eq!(extent_ratio(&one, &one, &b, &b).unwrap(), 0.0);
        let flat = Aabb::new(Vector3::zeros(), Vector3::zeros());
        assert!(extent_ratio(&one, &one, &flat, &b).is_err());
    }
}
