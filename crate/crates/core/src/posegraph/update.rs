//! Graph update on incoming summaries and rigidity reports.

use std::collections::BTreeSet;
use std::sync::Arc;

use rayon::prelude::*;

use super::rewrite::{apply_pgba_rewrite, RewriteOutcome, RigidityReport};
use super::solve::{SolveParams, SolveReport};
use super::{GraphError, SubmapGraph};
use crate::liegroup::Sim3;
use crate::registration::{register_pair, DenseMatcher, PairReport, RegistrationParams};
use crate::summary::{retrieve, RetrievalHit, SubmapId, SubmapSummary};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateParams {
    pub registration: RegistrationParams,
    pub top_k: usize,
    pub tau_sim: f64,
    pub tau_res: f64,
    pub tau_rig: f64,
    pub solve: SolveParams,
}

impl Default for UpdateParams {
    fn default() -> Self {
        Self {
            registration: RegistrationParams::default(),
            top_k: 3,
            tau_sim: 0.30,
            tau_res: 0.20,
            tau_rig: 0.10,
            solve: SolveParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateOutcome {
    pub node: SubmapId,
    pub refreshed: bool,
    pub candidates: Vec<RetrievalHit>,
    pub reports: Vec<PairReport>,
    pub new_edges: Vec<usize>,
    pub reverified: Vec<usize>,
    pub rewrite: Option<RewriteOutcome>,
    pub solve: SolveReport,
    pub fusable: BTreeSet<SubmapId>,
}

impl SubmapGraph {
    /// Adds a verified edge, first moving the joining component so the new
    /// edge is consistent when it links two components. The component that
    /// holds the gauge (or else the lower smallest id) stays put.
    pub fn add_verified_edge_aligned(
        &mut self,
        source: SubmapId,
        target: SubmapId,
        measurement: Sim3,
    ) -> Result<usize, GraphError> {
        let comps = self.components();
        let find = |id: SubmapId| comps.iter().position(|c| c.contains(&id));
        let (cs, ct) = (
            find(source).ok_or(GraphError::UnknownNode(source))?,
            find(target).ok_or(GraphError::UnknownNode(target))?,
        );
        if cs != ct {
            let gauge = self.gauge();
            let holds_gauge = |c: usize| gauge.is_some_and(|g| comps[c].contains(&g));
            let source_joins = if holds_gauge(cs) {
                false
            } else if holds_gauge(ct) {
                true
            } else {
                comps[cs][0] > comps[ct][0]
            };
            let c_src = self.nodes[&source].correction;
            let c_tgt = self.nodes[&target].correction;
            let (moving, g) = if source_joins {
                (cs, c_tgt.compose(&measurement).compose(&c_src.inverse()))
            } else {
                (
                    ct,
                    c_src
                        .compose(&measurement.inverse())
                        .compose(&c_tgt.inverse()),
                )
            };
            let ids = comps[moving].clone();
            self.transform_nodes(&ids, &g);
        }
        self.add_verified_edge(source, target, measurement)
    }

    fn reverify_incident(
        &mut self,
        id: SubmapId,
        params: &UpdateParams,
        dense: &dyn DenseMatcher,
        reports: &mut Vec<PairReport>,
    ) -> Vec<usize> {
        let queued: Vec<usize> = self
            .pending_reverification()
            .filter(|&i| self.edges[i].incident(id))
            .collect();
        let mut done = Vec::new();
        for i in queued {
            let (s, t) = (self.edges[i].source, self.edges[i].target);
            let (Some(ss), Some(ts)) = (
                self.nodes[&s].summary.clone(),
                self.nodes[&t].summary.clone(),
            ) else {
                continue;
            };
            let outcome = register_pair(&ss, &ts, &params.registration, dense);
            if let Some(m) = outcome.accepted_transform() {
                let e = &mut self.edges[i];
                e.measurement = m;
                e.valid = true;
                self.take_reverification(i);
                done.push(i);
            }
            reports.push(outcome.report);
        }
        done
    }

    fn finish(
        &mut self,
        mut outcome: UpdateOutcome,
        params: &UpdateParams,
    ) -> Result<UpdateOutcome, GraphError> {
        outcome.solve = self.solve(&params.solve)?;
        outcome.fusable = self.fusable_set(params.tau_res);
        Ok(outcome)
    }

    fn empty_outcome(id: SubmapId) -> UpdateOutcome {
        UpdateOutcome {
            node: id,
            refreshed: false,
            candidates: Vec::new(),
            reports: Vec::new(),
            new_edges: Vec::new(),
            reverified: Vec::new(),
            rewrite: None,
            solve: SolveReport {
                evaluations: 0,
                initial_cost: 0.0,
                final_cost: 0.0,
                accepted_costs: Vec::new(),
                termination: super::Termination::NoVariables,
                variables: 0,
            },
            fusable: BTreeSet::new(),
        }
    }

    /// Inserts a new summary (temporal link, retrieval, registration of each
    /// candidate, verified edges) or refreshes an existing one (re-verifying
    /// its queued edges), then solves.
    ///
    /// Candidates are restricted to other agents and registered concurrently;
    /// results are merged in candidate order. Failed pairs appear only in the
    /// returned reports.
    pub fn handle_summary(
        &mut self,
        summary: SubmapSummary,
        params: &UpdateParams,
        dense: &dyn DenseMatcher,
    ) -> Result<UpdateOutcome, GraphError> {
        let id = summary.id;
        let summary = Arc::new(summary);
        let mut outcome = Self::empty_outcome(id);

        if let Some(node) = self.nodes.get_mut(&id) {
            node.summary = Some(summary);
            node.anchor_cache = None;
            outcome.refreshed = true;
            outcome.reverified = self.reverify_incident(id, params, dense, &mut outcome.reports);
            return self.finish(outcome, params);
        }

        let prev = SubmapId::new(id.agent, id.index.wrapping_sub(1));
        let next = SubmapId::new(id.agent, id.index + 1);
        let init = self
            .correction(prev)
            .or_else(|| self.correction(next))
            .unwrap_or_else(Sim3::identity);
        self.add_node(id, init, Some(summary.clone()))?;
        if id.index > 0 && self.contains(prev) {
            self.add_temporal_edge(prev, id)?;
        }
        if self.contains(next) {
            self.add_temporal_edge(id, next)?;
        }

        let others: Vec<Arc<SubmapSummary>> = self
            .nodes
            .values()
            .filter(|n| n.id.agent != id.agent)
            .filter_map(|n| n.summary.clone())
            .collect();
        outcome.candidates = retrieve(
            &summary,
            others.iter().map(|s| s.as_ref()),
            params.top_k,
            params.tau_sim,
        );
        let pairs: Vec<_> = outcome
            .candidates
            .par_iter()
            .map(|hit| {
                let cand = self.nodes[&hit.id].summary.clone().expect("retrieved from summaries");
                register_pair(&summary, &cand, &params.registration, dense)
            })
            .collect();
        for p in pairs {
            if let Some(m) = p.accepted_transform() {
                let e = self.add_verified_edge_aligned(p.report.source, p.report.target, m)?;
                outcome.new_edges.push(e);
            }
            outcome.reports.push(p.report);
        }
        self.finish(outcome, params)
    }

    /// Applies a rigidity report and re-solves.
    pub fn handle_rigidity(
        &mut self,
        report: &RigidityReport,
        params: &UpdateParams,
    ) -> Result<UpdateOutcome, GraphError> {
        let mut outcome = Self::empty_outcome(report.node);
        outcome.rewrite = Some(apply_pgba_rewrite(self, report, params.tau_rig)?);
        self.finish(outcome, params)
    }
}
