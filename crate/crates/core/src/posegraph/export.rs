//! JSON view of the graph state.

use serde::{Deserialize, Serialize};

use super::{EdgeKind, SubmapGraph};
use crate::summary::SubmapId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeExport {
    pub agent: u32,
    pub index: u32,
    pub gauge: bool,
    /// `[scale, qw, qx, qy, qz, tx, ty, tz]`.
    pub correction: [f64; 8],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeExport {
    pub kind: EdgeKind,
    pub source: SubmapId,
    pub target: SubmapId,
    pub measurement: [f64; 8],
    pub weight: f64,
    pub photometric_weight: f64,
    pub valid: bool,
    pub pixel_count: usize,
    pub residual_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphExport {
    pub nodes: Vec<NodeExport>,
    pub edges: Vec<EdgeExport>,
    pub total_cost: f64,
}

impl SubmapGraph {
    pub fn export(&self) -> GraphExport {
        GraphExport {
            nodes: self
                .nodes()
                .map(|n| NodeExport {
                    agent: n.id.agent,
                    index: n.id.index,
                    gauge: n.gauge,
                    correction: n.correction.to_array(),
                })
                .collect(),
            edges: self
                .edges()
                .iter()
                .map(|e| EdgeExport {
                    kind: e.kind,
                    source: e.source,
                    target: e.target,
                    measurement: e.measurement.to_array(),
                    weight: e.weight,
                    photometric_weight: e.photometric_weight,
                    valid: e.valid,
                    pixel_count: e.pixel_count,
                    residual_norm: super::geo_residual(
                        &e.measurement,
                        &self.node(e.source).unwrap().correction,
                        &self.node(e.target).unwrap().correction,
                    )
                    .norm(),
                })
                .collect(),
            total_cost: self.total_cost(),
        }
    }
}
