//! Reaction to an agent's intra-agent pose-graph update of one submap.
//!
//! When the agent re-optimizes a submap its local frame moves by a similarity
//! `Δ`. If the keyframe centers moved rigidly, every stored measurement on
//! the node is rewritten analytically (`M ← M∘Δ⁻¹` on the source side,
//! `M ← Δ∘M` on the target side) and the correction absorbs the change
//! (`C ← C∘Δ⁻¹`), which keeps residuals consistent. Otherwise verified edges
//! are invalidated and queued for re-verification.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{EdgeKind, GraphError, SubmapGraph};
use crate::liegroup::Sim3;
use crate::registration::umeyama;
use crate::summary::SubmapId;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidityReport {
    pub node: SubmapId,
    pub delta: Sim3,
    /// RMSE of the post-update centers against `delta(pre)`.
    pub rho_rig: f64,
}

/// Closed-form similarity between pre- and post-update keyframe centers.
pub fn fit_rigidity(
    node: SubmapId,
    pre: &[Vector3<f64>],
    post: &[Vector3<f64>],
) -> Result<RigidityReport, GraphError> {
    let delta = umeyama(pre, post).map_err(|e| GraphError::Rigidity(e.to_string()))?;
    let sq: f64 = pre
        .iter()
        .zip(post)
        .map(|(a, b)| (delta.act(a) - b).norm_squared())
        .sum();
    Ok(RigidityReport {
        node,
        delta,
        rho_rig: (sq / pre.len() as f64).sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewriteOutcome {
    pub node: SubmapId,
    pub rigid: bool,
    pub rho_rig: f64,
    pub updated_edges: Vec<usize>,
    pub invalidated_edges: Vec<usize>,
}

/// Applies the rewrite for `report`.
///
/// Both branches move the node's correction by `Δ⁻¹` and drop its anchor
/// cache. In the rigid branch (`rho_rig ≤ tau_rig`) every valid incident edge
/// is rewritten; otherwise verified edges are invalidated and queued while
/// temporal edges still take the rewrite. When the node is the gauge, the
/// whole graph is left-composed by `Δ` so the gauge correction stays the
/// identity.
pub fn apply_pgba_rewrite(
    graph: &mut SubmapGraph,
    report: &RigidityReport,
    tau_rig: f64,
) -> Result<RewriteOutcome, GraphError> {
    let id = report.node;
    let node = graph.nodes.get(&id).ok_or(GraphError::UnknownNode(id))?;
    let is_gauge = node.gauge;
    let rigid = report.rho_rig <= tau_rig;
    let delta = report.delta;
    let delta_inv = delta.inverse();
    let mut out = RewriteOutcome {
        node: id,
        rigid,
        rho_rig: report.rho_rig,
        updated_edges: Vec::new(),
        invalidated_edges: Vec::new(),
    };
    for (i, e) in graph.edges.iter_mut().enumerate() {
        if !e.valid || !e.incident(id) {
            continue;
        }
        if !rigid && e.kind == EdgeKind::Verified {
            e.valid = false;
            out.invalidated_edges.push(i);
            continue;
        }
        if e.source == id {
            e.measurement = e.measurement.compose(&delta_inv);
        }
        if e.target == id {
            e.measurement = delta.compose(&e.measurement);
        }
        out.updated_edges.push(i);
    }
    for &i in &out.invalidated_edges {
        graph.queue_reverification(i);
    }
    if is_gauge {
        let all: Vec<SubmapId> = graph.nodes.keys().copied().collect();
        graph.transform_nodes(&all, &delta);
    }
    let n = graph.nodes.get_mut(&id).expect("checked above");
    n.correction = n.correction.compose(&delta_inv);
    n.anchor_cache = None;
    Ok(out)
}
