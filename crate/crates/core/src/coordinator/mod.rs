//! The running system: consumes agent messages in channel order, drives the
//! submap graph, fuses maps per target agent and evaluates the result.
//!
//! One coordinator thread owns the graph. When the fusable set gains members
//! a fusion job is handed to a worker thread as an immutable snapshot of
//! corrections and maps; the worker always fuses the newest pending
//! snapshot. A final fusion at stream end produces the exported maps, so
//! outputs depend only on the message order.

mod artifacts;
mod message;
mod metrics;

pub use artifacts::{write_artifacts, ArtifactOptions};
pub use message::{
    decode_map, decode_pgba, encode_map, encode_pgba, messages_from_events, write_stream, Message,
    MessageKind, Payload, StreamError, StreamHeader, StreamReader, STREAM_MAGIC, STREAM_VERSION,
};
pub use metrics::{
    associate, ate_rmse, coverage, duplicate_fraction, Alignment, AteError, MAX_TIME_GAP,
};

use std::collections::{BTreeMap, BTreeSet};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{
    build_occupied, carve_free, dedup, fuse, CarveParams, FusedMap, FusionKeyframe, FusionParams,
    FusionStats, GaussianPrimitive, OccupancyGrid, SubmapMap,
};
use crate::liegroup::Sim3;
use crate::posegraph::{
    fit_rigidity, CostParams, EdgeKind, GraphError, GraphExport, NodeExport, RewriteOutcome,
    SubmapGraph, UpdateOutcome, UpdateParams,
};
use crate::registration::{PairReport, PatchNccMatcher};
use crate::simworld::{GroundTruth, Scenario, TumPose, COVERAGE_VOXEL, OVERRIDE_KEYS};
use crate::summary::SubmapId;

#[derive(Debug, Error)]
pub enum CoordinatorError {
    #[error("stream: {0}")]
    Stream(#[from] StreamError),
    #[error("malformed message at offset {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("graph update for message at offset {offset}: {source}")]
    Graph { offset: usize, source: GraphError },
    #[error("invalid override {key} = {value}: {message}")]
    Override {
        key: String,
        value: f64,
        message: String,
    },
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunConfig {
    /// Abort on the first bad message instead of skipping it.
    pub strict: bool,
    /// Worker threads; 0 uses the default. With one thread, intermediate
    /// fusions are folded into the final one.
    pub threads: usize,
    pub cost: CostParams,
    pub update: UpdateParams,
    pub fusion: FusionParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            strict: false,
            threads: 0,
            cost: CostParams::default(),
            update: UpdateParams::default(),
            fusion: FusionParams::default(),
        }
    }
}

impl RunConfig {
    /// Applies named threshold overrides (see [`OVERRIDE_KEYS`]).
    pub fn apply_overrides(&mut self, overrides: &BTreeMap<String, f64>) -> Result<(), CoordinatorError> {
        for (key, &value) in overrides {
            let bad = |message: &str| CoordinatorError::Override {
                key: key.clone(),
                value,
                message: message.into(),
            };
            if !value.is_finite() || value < 0.0 {
                return Err(bad("must be finite and non-negative"));
            }
            let count = || {
                if value.fract() == 0.0 {
                    Ok(value as usize)
                } else {
                    Err(bad("must be an integer"))
                }
            };
            let u = &mut self.update;
            let th = &mut u.registration.thresholds;
            match key.as_str() {
                "tau_sim" => u.tau_sim = value,
                "top_k" => u.top_k = count()?,
                "tau_res" => u.tau_res = value,
                "tau_rig" => u.tau_rig = value,
                "tau_ext" => th.tau_ext = value,
                "min_inliers" => th.min_inliers = count()?,
                "min_overlap" => th.min_overlap_ratio = value,
                "min_fitness" => th.min_fitness = value,
                "max_icp_rmse" => th.max_rmse = value,
                _ => {
                    return Err(bad(&format!(
                        "unknown key, expected one of {}",
                        OVERRIDE_KEYS.join(", ")
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MessageCounts {
    pub summary: usize,
    pub pgba_report: usize,
    pub map_data: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentReport {
    pub agent: u32,
    pub submaps: usize,
    pub keyframes: usize,
    pub ate_sim3_cm: Option<f64>,
    pub ate_se3_cm: Option<f64>,
    /// Agent scale relative to the gauge agent, from submap corrections in
    /// the gauge component.
    pub relative_scale: Option<f64>,
    pub injected_relative_scale: Option<f64>,
    /// `|relative / injected − 1|`.
    pub relative_scale_error: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub nodes: usize,
    pub temporal_edges: usize,
    pub verified_edges: usize,
    pub invalid_edges: usize,
    pub gauge: Option<SubmapId>,
    pub total_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    /// Target agent; `None` for the global map.
    pub agent: Option<u32>,
    pub gaussians: usize,
    pub target_gaussians: usize,
    pub borrowed_gaussians: usize,
    pub retained_borrowed: usize,
    pub duplicate_fraction: f64,
    /// Fraction of ground-truth surface voxels (union of all agents) covered.
    pub coverage: Option<f64>,
    pub occupied_voxels: usize,
    pub free_voxels: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub triggers: usize,
    pub agents: Vec<MapReport>,
    pub global: Option<MapReport>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub messages: MessageCounts,
    /// Reasons for skipped messages, in stream order.
    pub diagnostics: Vec<String>,
    pub agents: Vec<AgentReport>,
    pub graph: GraphSummary,
    pub audit: Vec<PairReport>,
    pub rewrites: Vec<RewriteOutcome>,
    pub corrections: Vec<NodeExport>,
    pub fusion: FusionReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub report: RunReport,
    pub graph: GraphExport,
    /// Estimated keyframe trajectories in the global frame, per agent.
    pub trajectories: BTreeMap<u32, Vec<TumPose>>,
    pub agent_maps: BTreeMap<u32, Vec<GaussianPrimitive>>,
    pub global_map: Vec<GaussianPrimitive>,
}

impl RunOutput {
    pub fn is_empty(&self) -> bool {
        self.graph.nodes.is_empty()
    }
}

/// Immutable inputs of one fusion.
#[derive(Clone, Debug)]
pub struct FusionSnapshot {
    pub maps: BTreeMap<SubmapId, Arc<SubmapMap>>,
    pub corrections: BTreeMap<SubmapId, Sim3>,
    pub fusable: BTreeSet<SubmapId>,
    pub components: Vec<Vec<SubmapId>>,
    pub gauge_agent: Option<u32>,
}

#[derive(Clone, Debug)]
pub struct GlobalMap {
    pub gaussians: Vec<GaussianPrimitive>,
    pub stats: FusionStats,
    pub duplicate_fraction: f64,
}

#[derive(Clone, Debug)]
pub struct FusionResult {
    pub agents: BTreeMap<u32, FusedMap>,
    pub global: Option<GlobalMap>,
}

impl FusionSnapshot {
    fn agents(&self) -> BTreeSet<u32> {
        self.maps
            .keys()
            .filter(|id| self.corrections.contains_key(id))
            .map(|id| id.agent)
            .collect()
    }

    fn placed(&self, agent: u32) -> Vec<(&SubmapMap, Sim3)> {
        self.maps
            .iter()
            .filter(|(id, _)| id.agent == agent)
            .filter_map(|(id, m)| self.corrections.get(id).map(|c| (m.as_ref(), *c)))
            .collect()
    }

    /// Fusable submaps of other agents sharing a component with `anchors`.
    fn borrowable(&self, agent: u32, anchors: &BTreeSet<SubmapId>) -> Vec<SubmapId> {
        let linked: BTreeSet<SubmapId> = self
            .components
            .iter()
            .filter(|c| c.iter().any(|id| anchors.contains(id)))
            .flatten()
            .copied()
            .collect();
        self.fusable
            .iter()
            .filter(|id| id.agent != agent && linked.contains(id) && self.maps.contains_key(id))
            .copied()
            .collect()
    }

    /// Fuses every agent's map with the submaps it may borrow, then builds
    /// the global map by folding agents into the gauge agent's map in id
    /// order.
    pub fn fuse(&self, params: &FusionParams) -> FusionResult {
        let mut agents = BTreeMap::new();
        for agent in self.agents() {
            let target = self.placed(agent);
            let own: BTreeSet<SubmapId> = target.iter().map(|(m, _)| m.id).collect();
            let borrowed: Vec<(&SubmapMap, Sim3)> = self
                .borrowable(agent, &own)
                .into_iter()
                .map(|id| (self.maps[&id].as_ref(), self.corrections[&id]))
                .collect();
            agents.insert(agent, fuse(&target, &borrowed, params));
        }
        FusionResult {
            global: self.gauge_agent.map(|g| self.fuse_global(g, params)),
            agents,
        }
    }

    fn fuse_global(&self, reference: u32, params: &FusionParams) -> GlobalMap {
        let transformed = |list: &[(&SubmapMap, Sim3)]| -> Vec<GaussianPrimitive> {
            list.iter()
                .flat_map(|(m, c)| m.gaussians.iter().map(move |g| crate::fusion::transform_gaussian(g, c)))
                .collect()
        };
        let base = self.placed(reference);
        let mut ids: BTreeSet<SubmapId> = base.iter().map(|(m, _)| m.id).collect();
        let mut accum = transformed(&base);
        let mut keyframes: Vec<(&FusionKeyframe, Sim3)> = base
            .iter()
            .flat_map(|(m, c)| m.keyframes.iter().map(move |k| (k, *c)))
            .collect();
        let mut stats = FusionStats {
            target_gaussians: accum.len(),
            ..Default::default()
        };
        let mut duplicates = 0usize;
        for agent in self.agents().into_iter().filter(|a| *a != reference) {
            let borrowed: Vec<(&SubmapMap, Sim3)> = self
                .borrowable(reference, &ids)
                .into_iter()
                .filter(|id| id.agent == agent)
                .map(|id| (self.maps[&id].as_ref(), self.corrections[&id]))
                .collect();
            if borrowed.is_empty() {
                continue;
            }
            let incoming = transformed(&borrowed);
            let grid = OccupancyGrid {
                voxel: params.voxel,
                occupied: build_occupied(&accum, params.voxel, params.envelope),
                free: carve_free(
                    &keyframes,
                    &CarveParams {
                        voxel: params.voxel,
                        ..params.carve
                    },
                ),
            };
            let retained = dedup(&incoming, &grid);
            duplicates += (duplicate_fraction(&accum, &retained, COVERAGE_VOXEL)
                * retained.len() as f64)
                .round() as usize;
            stats.borrowed_gaussians += incoming.len();
            stats.retained_borrowed += retained.len();
            stats.occupied_voxels = grid.occupied.len();
            stats.free_voxels = grid.free.len();
            accum.extend(retained);
            for (m, c) in &borrowed {
                ids.insert(m.id);
                keyframes.extend(m.keyframes.iter().map(|k| (k, *c)));
            }
        }
        let before = accum.len();
        accum.retain(|g| g.opacity >= params.min_opacity);
        stats.pruned = before - accum.len();
        GlobalMap {
            gaussians: accum,
            stats,
            duplicate_fraction: if stats.retained_borrowed == 0 {
                0.0
            } else {
                duplicates as f64 / stats.retained_borrowed as f64
            },
        }
    }
}

fn fusion_worker(rx: mpsc::Receiver<FusionSnapshot>, params: FusionParams) {
    while let Ok(mut job) = rx.recv() {
        while let Ok(newer) = rx.try_recv() {
            job = newer;
        }
        let out = job.fuse(&params);
        for (agent, m) in &out.agents {
            debug!(
                "intermediate fusion agent {agent}: {} gaussians, {} borrowed retained",
                m.gaussians.len(),
                m.stats.retained_borrowed
            );
        }
    }
}

/// Message-driven coordinator state.
pub struct Coordinator {
    config: RunConfig,
    graph: SubmapGraph,
    dense: PatchNccMatcher,
    maps: BTreeMap<SubmapId, Arc<SubmapMap>>,
    last_seq: BTreeMap<u32, u64>,
    fusable: BTreeSet<SubmapId>,
    report: RunReport,
    worker: Option<(mpsc::Sender<FusionSnapshot>, thread::JoinHandle<()>)>,
}

impl Coordinator {
    pub fn new(config: RunConfig) -> Self {
        let worker = (config.threads != 1).then(|| {
            let (tx, rx) = mpsc::channel();
            let params = config.fusion;
            let handle = thread::spawn(move || fusion_worker(rx, params));
            (tx, handle)
        });
        Self {
            graph: SubmapGraph::new(config.cost),
            dense: PatchNccMatcher::default(),
            maps: BTreeMap::new(),
            last_seq: BTreeMap::new(),
            fusable: BTreeSet::new(),
            report: RunReport::default(),
            worker,
            config,
        }
    }

    pub fn graph(&self) -> &SubmapGraph {
        &self.graph
    }

    fn snapshot(&self) -> FusionSnapshot {
        FusionSnapshot {
            maps: self.maps.clone(),
            corrections: self.graph.corrections(),
            fusable: self.fusable.clone(),
            components: self.graph.components(),
            gauge_agent: self.graph.gauge().map(|g| g.agent),
        }
    }

    fn after_update(&mut self, outcome: UpdateOutcome) {
        self.report.audit.extend(outcome.reports);
        if let Some(r) = outcome.rewrite {
            self.report.rewrites.push(r);
        }
        let grew = !outcome.fusable.is_subset(&self.fusable);
        self.fusable = outcome.fusable;
        if grew {
            self.report.fusion.triggers += 1;
            if let Some((tx, _)) = &self.worker {
                let _ = tx.send(self.snapshot());
            }
        }
    }

    /// Handles one message. In lenient mode a bad message is skipped and
    /// recorded; in strict mode the error is returned.
    pub fn process(&mut self, offset: usize, msg: &Message) -> Result<(), CoordinatorError> {
        match self.try_process(offset, msg) {
            Err(e) if !self.config.strict => {
                warn!("skipping message: {e}");
                self.report.messages.skipped += 1;
                self.report.diagnostics.push(e.to_string());
                Ok(())
            }
            r => r,
        }
    }

    /// Records a framing error from the stream reader.
    pub fn stream_error(&mut self, error: StreamError) -> Result<(), CoordinatorError> {
        if self.config.strict {
            return Err(error.into());
        }
        warn!("skipping frame: {error}");
        self.report.messages.skipped += 1;
        self.report.diagnostics.push(error.to_string());
        Ok(())
    }

    fn try_process(&mut self, offset: usize, msg: &Message) -> Result<(), CoordinatorError> {
        let malformed = |message: String| CoordinatorError::Malformed { offset, message };
        if let Some(&last) = self.last_seq.get(&msg.agent) {
            if msg.seq <= last {
                return Err(malformed(format!(
                    "agent {} sequence {} does not follow {last}",
                    msg.agent, msg.seq
                )));
            }
        }
        let payload = msg.decode().map_err(|e| malformed(format!("{:?} payload: {e}", msg.kind)))?;
        if payload.id().agent != msg.agent {
            return Err(malformed(format!(
                "payload for {} in a frame from agent {}",
                payload.id(),
                msg.agent
            )));
        }
        self.last_seq.insert(msg.agent, msg.seq);
        let graph_err = |source| CoordinatorError::Graph { offset, source };
        match payload {
            Payload::Summary(s) => {
                self.report.messages.summary += 1;
                let out = self
                    .graph
                    .handle_summary(s, &self.config.update, &self.dense)
                    .map_err(graph_err)?;
                debug!(
                    "summary {}: {} candidates, {} new edges, cost {:.3e}",
                    out.node,
                    out.candidates.len(),
                    out.new_edges.len(),
                    out.solve.final_cost
                );
                self.after_update(out);
            }
            Payload::Pgba(p) => {
                self.report.messages.pgba_report += 1;
                let fit = fit_rigidity(p.id, &p.pre, &p.post).map_err(graph_err)?;
                let out = self
                    .graph
                    .handle_rigidity(&fit, &self.config.update)
                    .map_err(graph_err)?;
                info!(
                    "pgba {}: rho_rig {:.4}, {}",
                    p.id,
                    fit.rho_rig,
                    if fit.rho_rig <= self.config.update.tau_rig { "rigid" } else { "non-rigid" }
                );
                self.after_update(out);
            }
            Payload::MapData(m) => {
                self.report.messages.map_data += 1;
                self.maps.insert(m.id, Arc::new(m));
            }
        }
        Ok(())
    }

    /// Final fusion and evaluation against optional ground truth.
    pub fn finish(mut self, truth: Option<&GroundTruth>) -> RunOutput {
        if let Some((tx, handle)) = self.worker.take() {
            drop(tx);
            let _ = handle.join();
        }
        let graph = self.graph.export();
        let mut report = std::mem::take(&mut self.report);
        report.corrections = graph.nodes.clone();
        report.graph = GraphSummary {
            nodes: graph.nodes.len(),
            temporal_edges: graph.edges.iter().filter(|e| e.kind == EdgeKind::Temporal).count(),
            verified_edges: graph
                .edges
                .iter()
                .filter(|e| e.kind == EdgeKind::Verified && e.valid)
                .count(),
            invalid_edges: graph.edges.iter().filter(|e| !e.valid).count(),
            gauge: self.graph.gauge(),
            total_cost: graph.total_cost,
        };

        let snapshot = self.snapshot();
        let trajectories = self.trajectories(&snapshot);
        let to_world = truth.and_then(|t| {
            let g = self.graph.gauge()?;
            Some(t.local_to_world(g)?.compose(&self.graph.correction(g)?.inverse()))
        });
        let surface: Option<BTreeSet<u64>> =
            truth.map(|t| t.agents.iter().flat_map(|a| a.surface_voxels.iter().copied()).collect());
        let cover = |gs: &[GaussianPrimitive]| match (&to_world, &surface) {
            (Some(w), Some(s)) => Some(coverage(gs, w, s, COVERAGE_VOXEL)),
            _ => None,
        };

        let fused = if self.maps.is_empty() {
            FusionResult {
                agents: BTreeMap::new(),
                global: None,
            }
        } else {
            snapshot.fuse(&self.config.fusion)
        };
        let mut agent_maps = BTreeMap::new();
        for (agent, m) in fused.agents {
            let (own, borrowed) = m.gaussians.split_at(m.target_count);
            report.fusion.agents.push(MapReport {
                agent: Some(agent),
                gaussians: m.gaussians.len(),
                target_gaussians: m.stats.target_gaussians,
                borrowed_gaussians: m.stats.borrowed_gaussians,
                retained_borrowed: m.stats.retained_borrowed,
                duplicate_fraction: duplicate_fraction(own, borrowed, COVERAGE_VOXEL),
                coverage: cover(&m.gaussians),
                occupied_voxels: m.stats.occupied_voxels,
                free_voxels: m.stats.free_voxels,
            });
            agent_maps.insert(agent, m.gaussians);
        }
        let global_map = match fused.global {
            Some(g) => {
                report.fusion.global = Some(MapReport {
                    agent: None,
                    gaussians: g.gaussians.len(),
                    target_gaussians: g.stats.target_gaussians,
                    borrowed_gaussians: g.stats.borrowed_gaussians,
                    retained_borrowed: g.stats.retained_borrowed,
                    duplicate_fraction: g.duplicate_fraction,
                    coverage: cover(&g.gaussians),
                    occupied_voxels: g.stats.occupied_voxels,
                    free_voxels: g.stats.free_voxels,
                });
                g.gaussians
            }
            None => Vec::new(),
        };

        report.agents = self.agent_reports(&snapshot, &trajectories, truth);
        RunOutput {
            report,
            graph,
            trajectories,
            agent_maps,
            global_map,
        }
    }

    fn trajectories(&self, snap: &FusionSnapshot) -> BTreeMap<u32, Vec<TumPose>> {
        let mut out: BTreeMap<u32, Vec<TumPose>> = BTreeMap::new();
        for (id, m) in &snap.maps {
            let Some(c) = snap.corrections.get(id) else { continue };
            out.entry(id.agent).or_default().extend(
                m.keyframes
                    .iter()
                    .map(|k| TumPose::from_sim3(k.timestamp, &c.compose(&k.pose))),
            );
        }
        out
    }

    fn agent_reports(
        &self,
        snap: &FusionSnapshot,
        trajectories: &BTreeMap<u32, Vec<TumPose>>,
        truth: Option<&GroundTruth>,
    ) -> Vec<AgentReport> {
        let gauge = self.graph.gauge();
        let component: BTreeSet<SubmapId> = snap
            .components
            .iter()
            .find(|c| gauge.is_some_and(|g| c.contains(&g)))
            .map(|c| c.iter().copied().collect())
            .unwrap_or_default();
        let log_scale = |agent: u32| -> Option<f64> {
            let v: Vec<f64> = component
                .iter()
                .filter(|id| id.agent == agent)
                .map(|id| -snap.corrections[id].scale().ln())
                .collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        let reference = gauge.map(|g| g.agent);
        let ref_log = reference.and_then(log_scale);
        let agents: BTreeSet<u32> = self.graph.nodes().map(|n| n.id.agent).collect();
        agents
            .into_iter()
            .map(|agent| {
                let est = trajectories.get(&agent).map(Vec::as_slice).unwrap_or(&[]);
                let gt = truth.and_then(|t| t.agent(agent));
                let ate = |mode| gt.and_then(|g| ate_rmse(est, &g.trajectory, mode).ok());
                let relative_scale = log_scale(agent).zip(ref_log).map(|(a, r)| (a - r).exp());
                let injected_relative_scale = truth.zip(reference).and_then(|(t, r)| {
                    Some(t.agent(agent)?.scale_error / t.agent(r)?.scale_error)
                });
                AgentReport {
                    agent,
                    submaps: self.graph.nodes().filter(|n| n.id.agent == agent).count(),
                    keyframes: est.len(),
                    ate_sim3_cm: ate(Alignment::Sim3),
                    ate_se3_cm: ate(Alignment::Se3),
                    relative_scale,
                    injected_relative_scale,
                    relative_scale_error: relative_scale
                        .zip(injected_relative_scale)
                        .map(|(e, i)| (e / i - 1.0).abs()),
                }
            })
            .collect()
    }
}

/// Runs a serialized stream. Overrides in the stream header are applied on
/// top of `config`.
pub fn run_stream(
    bytes: &[u8],
    config: &RunConfig,
    truth: Option<&GroundTruth>,
) -> Result<RunOutput, CoordinatorError> {
    let (header, reader) = StreamReader::new(bytes)?;
    let mut config = *config;
    config.apply_overrides(&header.overrides)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| CoordinatorError::ThreadPool(e.to_string()))?;
    pool.install(|| {
        let mut coordinator = Coordinator::new(config);
        for (offset, item) in reader {
            match item {
                Ok(msg) => coordinator.process(offset, &msg)?,
                Err(e) => coordinator.stream_error(e)?,
            }
        }
        Ok(coordinator.finish(truth))
    })
}

/// Serializes a scenario's canonical event order into a stream.
pub fn scenario_stream(scenario: &Scenario) -> Vec<u8> {
    let header = StreamHeader {
        scenario: Some(scenario.config.to_text()),
        overrides: scenario.config.overrides.clone(),
    };
    write_stream(&header, &messages_from_events(&scenario.events))
}

/// Runs a generated scenario through its serialized stream and evaluates it
/// against the scenario's ground truth.
pub fn run_scenario(scenario: &Scenario, config: &RunConfig) -> Result<(RunOutput, Vec<u8>), CoordinatorError> {
    let stream = scenario_stream(scenario);
    let out = run_stream(&stream, config, Some(&scenario.ground_truth))?;
    Ok((out, stream))
}
