//! Verified inter-agent Sim(3) constraints from pairs of summaries.
//!
//! The pipeline runs descriptor matching (with a dense fallback when too few
//! pairs survive), RANSAC over closed-form similarity fits, ICP on the
//! registration clouds, and a joint verification predicate. Every stage is a
//! pure function of its inputs and a seed derived from the pair ids.

mod estimate;
mod icp;
mod matching;
mod verify;

pub use estimate::{ransac_umeyama, umeyama, RansacParams, RansacResult};
pub use icp::{icp_refine, GridIndex, IcpParams, IcpResult};
pub use matching::{match_summaries, DenseMatcher, MatchParams, PatchNccMatcher};
pub use verify::{
    extent_ratio, verify, GateInputs, GateReport, GateResult, VerificationThresholds,
};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::liegroup::Sim3;
use crate::summary::{SubmapId, SubmapSummary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("point lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("estimation failed: {0}")]
    EstimationFailed(String),
}

/// One putative pair. `index` identifies the source feature and is unique
/// within a set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub index: usize,
    pub source: Vector3<f64>,
    pub target: Vector3<f64>,
    pub score: f64,
}

impl Correspondence {
    pub fn new(index: usize, source: Vector3<f64>, target: Vector3<f64>, score: f64) -> Self {
        Self {
            index,
            source,
            target,
            score,
        }
    }
}

/// A refined source-to-target similarity with the evidence behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct Sim3Estimate {
    /// Maps source-local points into the target-local frame (after ICP).
    pub transform: Sim3,
    pub ransac_transform: Sim3,
    pub inliers_source: Vec<Vector3<f64>>,
    pub inliers_target: Vec<Vector3<f64>>,
    pub correspondences: usize,
    pub inlier_rmse: f64,
    pub fitness: f64,
    pub icp_rmse: f64,
    pub extent_ratio: f64,
}

impl Sim3Estimate {
    pub fn scale(&self) -> f64 {
        self.transform.scale()
    }

    pub fn gate_inputs(&self) -> GateInputs {
        GateInputs {
            scale: self.scale(),
            inliers: self.inliers_source.len(),
            overlap_ratio: if self.correspondences == 0 {
                0.0
            } else {
                self.inliers_source.len() as f64 / self.correspondences as f64
            },
            inlier_rmse: self.inlier_rmse,
            fitness: self.fitness,
            icp_rmse: self.icp_rmse,
            extent_ratio: self.extent_ratio,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RegistrationParams {
    pub matching: MatchParams,
    pub ransac: RansacParams,
    pub icp: IcpParams,
    pub thresholds: VerificationThresholds,
}

/// Audit record for one candidate pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub source: SubmapId,
    pub target: SubmapId,
    pub sparse_matches: usize,
    pub dense_matches: usize,
    /// Set when the pipeline stopped before the predicate could run.
    pub failure: Option<String>,
    pub gate_inputs: Option<GateInputs>,
    pub gates: Vec<GateResult>,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairOutcome {
    pub report: PairReport,
    pub estimate: Option<Sim3Estimate>,
}

impl PairOutcome {
    /// The verified source-to-target measurement, if accepted.
    pub fn accepted_transform(&self) -> Option<Sim3> {
        if self.report.accepted {
            self.estimate.as_ref().map(|e| e.transform)
        } else {
            None
        }
    }
}

/// Deterministic RANSAC seed for an ordered pair.
pub fn pair_seed(src: SubmapId, tgt: SubmapId) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for v in [src.agent, src.index, tgt.agent, tgt.index] {
        h ^= v as u64;
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    h
}

/// Runs the full cascade for `src` registered into `tgt`.
pub fn register_pair(
    src: &SubmapSummary,
    tgt: &SubmapSummary,
    params: &RegistrationParams,
    dense: &dyn DenseMatcher,
) -> PairOutcome {
    let mut report = PairReport {
        source: src.id,
        target: tgt.id,
        sparse_matches: 0,
        dense_matches: 0,
        failure: None,
        gate_inputs: None,
        gates: Vec::new(),
        accepted: false,
    };
    let mut m = match_summaries(src, tgt, &params.matching);
    report.sparse_matches = m.len();
    if m.len() < params.matching.n_min {
        let extra = dense.match_dense(src, tgt);
        report.dense_matches = extra.len();
        m.extend(extra);
    }
    let ransac = match ransac_umeyama(&m, &params.ransac, pair_seed(src.id, tgt.id)) {
        Ok(r) => r,
        Err(e) => {
            report.failure = Some(e.to_string());
            return PairOutcome {
                report,
                estimate: None,
            };
        }
    };
    let icp = icp_refine(&ransac.transform, &src.cloud, &tgt.cloud, &params.icp);
    let inliers_source: Vec<_> = ransac.inliers.iter().map(|&i| m[i].source).collect();
    let inliers_target: Vec<_> = ransac.inliers.iter().map(|&i| m[i].target).collect();
    let eta = match extent_ratio(&inliers_source, &inliers_target, &src.aabb, &tgt.aabb) {
        Ok(v) => v,
        Err(e) => {
            report.failure = Some(e.to_string());
            return PairOutcome {
                report,
                estimate: None,
            };
        }
    };
    let estimate = Sim3Estimate {
        transform: icp.transform,
        ransac_transform: ransac.transform,
        inliers_source,
        inliers_target,
        correspondences: m.len(),
        inlier_rmse: ransac.inlier_rmse,
        fitness: icp.fitness,
        icp_rmse: icp.rmse,
        extent_ratio: eta,
    };
    let inputs = estimate.gate_inputs();
    let gates = verify(&inputs, &params.thresholds);
    report.gate_inputs = Some(inputs);
    report.accepted = gates.accepted;
    report.gates = gates.gates;
    PairOutcome {
        report,
        estimate: Some(estimate),
    }
}
