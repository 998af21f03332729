//! Global Sim(3) submap graph.
//!
//! Each node carries a correction mapping its submap-local frame into the
//! global frame. Temporal edges chain consecutive submaps of one agent;
//! verified edges carry a registered source-to-target similarity and an
//! anchor-image photometric term. The cost is
//!
//! ```text
//! Σ_e w_e ρ_geo(‖r_geo‖²) + Σ_{e verified} (w_pho / |U_e|) Σ_u ρ_pho(r_u²)
//! ```
//!
//! with Huber kernels and `U_e` the source anchor samples that land inside
//! the target anchor.

mod export;
mod residual;
mod rewrite;
mod solve;
mod update;

pub use export::{EdgeExport, GraphExport, NodeExport};
pub use residual::{
    geo_residual, geo_residual_jacobians, huber, huber_weight, pho_residual, AnchorCache,
    PhotoSample, Row7,
};
pub use rewrite::{apply_pgba_rewrite, fit_rigidity, RewriteOutcome, RigidityReport};
pub use solve::{SolveParams, SolveReport, Termination};
pub use update::{UpdateOutcome, UpdateParams};

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::liegroup::Sim3;
use crate::summary::{SubmapId, SubmapSummary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(SubmapId),
    #[error("node {0} already exists")]
    DuplicateNode(SubmapId),
    #[error("invalid edge: {0}")]
    InvalidEdge(String),
    #[error("normal equations singular at maximum damping ({0})")]
    Singular(String),
    #[error("rigidity fit failed: {0}")]
    Rigidity(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Temporal,
    Verified,
}

#[derive(Clone, Debug)]
pub struct SubmapNode {
    pub id: SubmapId,
    pub correction: Sim3,
    pub summary: Option<Arc<SubmapSummary>>,
    /// Source-side photometric samples; `None` until built or after a rewrite.
    pub anchor_cache: Option<Arc<AnchorCache>>,
    pub gauge: bool,
}

impl SubmapNode {
    pub fn anchor_cache_valid(&self) -> bool {
        self.anchor_cache.is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphEdge {
    pub kind: EdgeKind,
    pub source: SubmapId,
    pub target: SubmapId,
    /// Maps source-local points into the target-local frame.
    pub measurement: Sim3,
    pub weight: f64,
    pub photometric_weight: f64,
    pub valid: bool,
    /// `|U_e|` at the last cost evaluation.
    pub pixel_count: usize,
}

impl GraphEdge {
    pub fn incident(&self, id: SubmapId) -> bool {
        self.source == id || self.target == id
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostParams {
    pub weight_temporal: f64,
    pub weight_verified: f64,
    pub weight_photometric: f64,
    pub huber_geo: f64,
    pub huber_pho: f64,
    pub pixel_stride: usize,
    pub min_pixels: usize,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            weight_temporal: 5.0,
            weight_verified: 1.0,
            weight_photometric: 1.0,
            huber_geo: 0.5,
            huber_pho: 0.1,
            pixel_stride: 2,
            min_pixels: 64,
        }
    }
}

/// Per-edge cost breakdown.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct EdgeCost {
    pub geometric: f64,
    pub photometric: f64,
    pub pixels: usize,
}

impl EdgeCost {
    pub fn total(&self) -> f64 {
        self.geometric + self.photometric
    }
}

#[derive(Clone, Debug, Default)]
pub struct SubmapGraph {
    pub params: CostParams,
    nodes: BTreeMap<SubmapId, SubmapNode>,
    edges: Vec<GraphEdge>,
    /// Invalidated verified edges awaiting re-verification, by edge index.
    reverify: BTreeSet<usize>,
}

impl SubmapGraph {
    pub fn new(params: CostParams) -> Self {
        Self {
            params,
            ..Default::default()
        }
    }

    /// Adds a node; the first node ever added becomes the gauge.
    pub fn add_node(
        &mut self,
        id: SubmapId,
        correction: Sim3,
        summary: Option<Arc<SubmapSummary>>,
    ) -> Result<(), GraphError> {
        if self.nodes.contains_key(&id) {
            return Err(GraphError::DuplicateNode(id));
        }
        let gauge = self.nodes.is_empty();
        self.nodes.insert(
            id,
            SubmapNode {
                id,
                correction: if gauge { Sim3::identity() } else { correction },
                summary,
                anchor_cache: None,
                gauge,
            },
        );
        Ok(())
    }

    pub fn add_temporal_edge(&mut self, source: SubmapId, target: SubmapId) -> Result<usize, GraphError> {
        if source.agent != target.agent || source.index.abs_diff(target.index) != 1 {
            return Err(GraphError::InvalidEdge(format!(
                "temporal edge {source} -> {target} must join consecutive submaps of one agent"
            )));
        }
        self.push_edge(GraphEdge {
            kind: EdgeKind::Temporal,
            source,
            target,
            measurement: Sim3::identity(),
            weight: self.params.weight_temporal,
            photometric_weight: 0.0,
            valid: true,
            pixel_count: 0,
        })
    }

    pub fn add_verified_edge(
        &mut self,
        source: SubmapId,
        target: SubmapId,
        measurement: Sim3,
    ) -> Result<usize, GraphError> {
        if source.agent == target.agent {
            return Err(GraphError::InvalidEdge(format!(
                "verified edge {source} -> {target} must join distinct agents"
            )));
        }
        self.push_edge(GraphEdge {
            kind: EdgeKind::Verified,
            source,
            target,
            measurement,
            weight: self.params.weight_verified,
            photometric_weight: self.params.weight_photometric,
            valid: true,
            pixel_count: 0,
        })
    }

    fn push_edge(&mut self, e: GraphEdge) -> Result<usize, GraphError> {
        for id in [e.source, e.target] {
            if !self.nodes.contains_key(&id) {
                return Err(GraphError::UnknownNode(id));
            }
        }
        self.edges.push(e);
        Ok(self.edges.len() - 1)
    }

    pub fn node(&self, id: SubmapId) -> Option<&SubmapNode> {
        self.nodes.get(&id)
    }

    pub fn node_mut(&mut self, id: SubmapId) -> Option<&mut SubmapNode> {
        self.nodes.get_mut(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &SubmapNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn edge_mut(&mut self, index: usize) -> Option<&mut GraphEdge> {
        self.edges.get_mut(index)
    }

    pub fn contains(&self, id: SubmapId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn correction(&self, id: SubmapId) -> Option<Sim3> {
        self.nodes.get(&id).map(|n| n.correction)
    }

    pub fn set_correction(&mut self, id: SubmapId, c: Sim3) -> Result<(), GraphError> {
        let n = self.nodes.get_mut(&id).ok_or(GraphError::UnknownNode(id))?;
        n.correction = c;
        Ok(())
    }

    pub fn corrections(&self) -> BTreeMap<SubmapId, Sim3> {
        self.nodes.iter().map(|(k, n)| (*k, n.correction)).collect()
    }

    pub fn gauge(&self) -> Option<SubmapId> {
        self.nodes.values().find(|n| n.gauge).map(|n| n.id)
    }

    pub fn pending_reverification(&self) -> impl Iterator<Item = usize> + '_ {
        self.reverify.iter().copied()
    }

    pub(crate) fn queue_reverification(&mut self, edge: usize) {
        self.reverify.insert(edge);
    }

    pub(crate) fn take_reverification(&mut self, edge: usize) -> bool {
        self.reverify.remove(&edge)
    }

    /// Builds missing source-side anchor caches.
    pub fn refresh_anchor_caches(&mut self) {
        let stride = self.params.pixel_stride;
        for n in self.nodes.values_mut() {
            if n.anchor_cache.is_none() {
                if let Some(s) = &n.summary {
                    n.anchor_cache = Some(Arc::new(AnchorCache::build(&s.anchor, stride)));
                }
            }
        }
    }

    /// Connected components over valid edges, each sorted, in order of their
    /// smallest id.
    pub fn components(&self) -> Vec<Vec<SubmapId>> {
        let ids: Vec<SubmapId> = self.nodes.keys().copied().collect();
        let pos: BTreeMap<SubmapId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut parent: Vec<usize> = (0..ids.len()).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for e in self.edges.iter().filter(|e| e.valid) {
            let (a, b) = (find(&mut parent, pos[&e.source]), find(&mut parent, pos[&e.target]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: BTreeMap<usize, Vec<SubmapId>> = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(*id);
        }
        groups.into_values().collect()
    }

    /// The held-fixed node of each component: the gauge if present, else the
    /// lowest id.
    pub fn fixed_nodes(&self) -> BTreeSet<SubmapId> {
        let gauge = self.gauge();
        self.components()
            .into_iter()
            .map(|c| {
                gauge
                    .filter(|g| c.contains(g))
                    .unwrap_or(c[0])
            })
            .collect()
    }

    fn photometric_inputs(&self, e: &GraphEdge) -> Option<(Arc<AnchorCache>, Arc<SubmapSummary>)> {
        if e.kind != EdgeKind::Verified || e.photometric_weight <= 0.0 {
            return None;
        }
        let cache = self.nodes.get(&e.source)?.anchor_cache.clone()?;
        let tgt = self.nodes.get(&e.target)?.summary.clone()?;
        Some((cache, tgt))
    }

    /// Cost of one edge under the given corrections; invalid edges cost 0.
    pub fn edge_cost_with(&self, e: &GraphEdge, corr: &BTreeMap<SubmapId, Sim3>) -> EdgeCost {
        if !e.valid {
            return EdgeCost::default();
        }
        let (cs, ct) = (&corr[&e.source], &corr[&e.target]);
        let r = geo_residual(&e.measurement, cs, ct);
        let mut out = EdgeCost {
            geometric: e.weight * huber(r.norm_squared(), self.params.huber_geo),
            ..Default::default()
        };
        if let Some((cache, tgt)) = self.photometric_inputs(e) {
            let samples = pho_residual(&cache, &tgt.anchor, cs, ct, false);
            out.pixels = samples.len();
            if samples.len() >= self.params.min_pixels {
                let sum: f64 = samples
                    .iter()
                    .map(|s| huber(s.residual * s.residual, self.params.huber_pho))
                    .sum();
                out.photometric = e.photometric_weight * sum / samples.len() as f64;
            }
        }
        out
    }

    pub fn edge_cost(&self, index: usize) -> EdgeCost {
        self.edge_cost_with(&self.edges[index], &self.corrections())
    }

    pub fn total_cost_with(&self, corr: &BTreeMap<SubmapId, Sim3>) -> f64 {
        self.edges.iter().map(|e| self.edge_cost_with(e, corr).total()).sum()
    }

    pub fn total_cost(&self) -> f64 {
        self.total_cost_with(&self.corrections())
    }

    /// Records `|U_e|` on every edge at the current corrections.
    pub fn update_pixel_counts(&mut self) {
        let corr = self.corrections();
        let counts: Vec<usize> = self
            .edges
            .iter()
            .map(|e| self.edge_cost_with(e, &corr).pixels)
            .collect();
        for (e, c) in self.edges.iter_mut().zip(counts) {
            e.pixel_count = c;
        }
    }

    /// Robust geometric residual magnitude `√ρ_geo(‖r‖²)` of a valid edge.
    pub fn robust_residual(&self, index: usize) -> f64 {
        let e = &self.edges[index];
        let r = geo_residual(
            &e.measurement,
            &self.nodes[&e.source].correction,
            &self.nodes[&e.target].correction,
        );
        huber(r.norm_squared(), self.params.huber_geo).sqrt()
    }

    /// Nodes with at least one valid verified edge whose mean robust residual
    /// over valid incident edges is at most `tau_res`.
    pub fn fusable_set(&self, tau_res: f64) -> BTreeSet<SubmapId> {
        let mut sums: BTreeMap<SubmapId, (f64, usize, bool)> = BTreeMap::new();
        for (i, e) in self.edges.iter().enumerate() {
            if !e.valid {
                continue;
            }
            let r = self.robust_residual(i);
            for id in [e.source, e.target] {
                let s = sums.entry(id).or_insert((0.0, 0, false));
                s.0 += r;
                s.1 += 1;
                s.2 |= e.kind == EdgeKind::Verified;
            }
        }
        sums.into_iter()
            .filter(|(_, (sum, n, verified))| *verified && sum / *n as f64 <= tau_res)
            .map(|(id, _)| id)
            .collect()
    }

    /// Left-composes `g` onto the corrections of `ids`.
    pub fn transform_nodes(&mut self, ids: &[SubmapId], g: &Sim3) {
        for id in ids {
            if let Some(n) = self.nodes.get_mut(id) {
                n.correction = g.compose(&n.correction);
            }
        }
    }
}
