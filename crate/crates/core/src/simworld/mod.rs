//! Deterministic synthetic multi-agent world with ground truth.
//!
//! Scenes are axis-aligned textured boxes rendered by exact ray casting.
//! Each agent follows a scripted camera path; its keyframes are frozen into
//! submaps expressed in a scaled, drifting local frame, summarized, and
//! emitted as an ordered event stream together with map payloads and
//! scripted pose-graph updates.

mod config;
mod scene;
mod submaps;
mod trajectory;
mod tum;

pub use config::{ConfigError, OverlapPlan, PgbaScript, ScenarioConfig, OVERRIDE_KEYS};
pub use scene::{render, render_anchor, value_noise, Hit, Material, Pattern, Render, SceneBox, SceneModel};
pub use submaps::{
    build_submaps, emit_pgba_event, event_delta, global_descriptor, partition, rewrite_submap,
    AgentScript, PgbaMessage, SimKeyframe, SimParams, SimSubmap, DECIMATE_VOXEL, SEED_STRIDE,
};
pub use trajectory::{
    add_room, build_scene, corridor_scene, look_at, plan_trajectories, timestamp,
    KEYFRAME_PERIOD, RING_SPACING, ROOM_B_OFFSET,
};
pub use tum::{format_tum, parse_tum, TumError, TumPose};

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::Intrinsics;
use crate::voxel::voxel_key;
use crate::fusion::SubmapMap;
use crate::summary::{Aabb, SubmapId, SubmapSummary};

/// One agent-originated event in stream order.
/// Voxel size for surface coverage bookkeeping.
pub const COVERAGE_VOXEL: f64 = 0.10;

#[derive(Clone, Debug, PartialEq)]
pub enum SimEvent {
    Summary(SubmapSummary),
    MapData(SubmapMap),
    Pgba(PgbaMessage),
}

impl SimEvent {
    pub fn agent(&self) -> u32 {
        match self {
            Self::Summary(s) => s.id.agent,
            Self::MapData(m) => m.id.agent,
            Self::Pgba(p) => p.id.agent,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmapTruth {
    pub index: u32,
    /// Local-to-world similarity as `[s, qw, qx, qy, qz, tx, ty, tz]`.
    pub local_to_world: [f64; 8],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentTruth {
    pub agent: u32,
    pub scale_error: f64,
    pub submaps: Vec<SubmapTruth>,
    pub trajectory: Vec<TumPose>,
    /// Sorted keys of world voxels at [`COVERAGE_VOXEL`] holding observed
    /// surface.
    pub surface_voxels: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scene_min: [f64; 3],
    pub scene_max: [f64; 3],
    pub scene_diagonal: f64,
    pub agents: Vec<AgentTruth>,
}

impl GroundTruth {
    pub fn agent(&self, agent: u32) -> Option<&AgentTruth> {
        self.agents.iter().find(|a| a.agent == agent)
    }

    /// Ground-truth local-to-world similarity of one submap.
    pub fn local_to_world(&self, id: SubmapId) -> Option<crate::liegroup::Sim3> {
        let a = self.agent(id.agent)?;
        let s = a.submaps.iter().find(|s| s.index == id.index)?;
        crate::liegroup::Sim3::from_array(&s.local_to_world).ok()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub scene: SceneModel,
    pub scripts: Vec<AgentScript>,
    /// Final submap state per agent, after scripted updates.
    pub submaps: Vec<Vec<SimSubmap>>,
    /// Canonical round-robin interleaving of all agents' events.
    pub events: Vec<SimEvent>,
    pub ground_truth: GroundTruth,
}

impl Scenario {
    pub fn scene_bounds(&self) -> Aabb {
        self.scene.bounds()
    }

    pub fn submap(&self, id: SubmapId) -> Option<&SimSubmap> {
        self.submaps
            .get(id.agent as usize)?
            .iter()
            .find(|s| s.id == id)
    }
}

fn agent_rng(seed: u64, agent: u32, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (agent as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

/// Builds the scene, scripts, submaps and event stream for `config`.
pub fn generate_scenario(config: &ScenarioConfig) -> Scenario {
    let scene = build_scene(config);
    let paths = plan_trajectories(config);
    let params = SimParams {
        k_max: config.k_max,
        tau_move: config.tau_move,
        intrinsics: Intrinsics::centered(config.focal, config.width, config.height),
        width: config.width,
        height: config.height,
        point_noise: config.point_noise,
        exposure_gain: config.exposure_gain,
        exposure_bias: config.exposure_bias,
    };
    let scripts: Vec<AgentScript> = paths
        .into_iter()
        .enumerate()
        .map(|(a, poses)| AgentScript {
            agent: a as u32,
            timestamps: (0..poses.len()).map(timestamp).collect(),
            poses,
            scale_error: config.scale_error(a),
            drift_rot: config.drift_rot,
            drift_trans: config.drift_trans,
            pgba: config
                .pgba
                .iter()
                .filter(|e| e.agent as usize == a)
                .copied()
                .collect(),
        })
        .collect();
    let mut submaps: Vec<Vec<SimSubmap>> = scripts
        .iter()
        .map(|s| build_submaps(s, &scene, &params, &mut agent_rng(config.seed, s.agent, 0)))
        .collect();

    let mut events = Vec::new();
    let longest = submaps.iter().map(Vec::len).max().unwrap_or(0);
    let mut event_rngs: Vec<ChaCha8Rng> = scripts
        .iter()
        .map(|s| agent_rng(config.seed, s.agent, 1))
        .collect();
    for l in 0..longest {
        for (a, script) in scripts.iter().enumerate() {
            let Some(sm) = submaps[a].get(l) else { continue };
            events.push(SimEvent::Summary(sm.summary.clone()));
            events.push(SimEvent::MapData(sm.map.clone()));
            for event in script.pgba.iter().filter(|e| e.after as usize == l + 1) {
                let j = event.submap as usize;
                let (msg, updated) = emit_pgba_event(&submaps[a][j], event, &mut event_rngs[a]);
                events.push(SimEvent::Pgba(msg));
                events.push(SimEvent::Summary(updated.summary.clone()));
                events.push(SimEvent::MapData(updated.map.clone()));
                submaps[a][j] = updated;
            }
        }
    }

    let bounds = scene.bounds();
    let ground_truth = GroundTruth {
        scene_min: bounds.min.into(),
        scene_max: bounds.max.into(),
        scene_diagonal: bounds.diagonal(),
        agents: scripts
            .iter()
            .zip(&submaps)
            .map(|(s, sms)| AgentTruth {
                agent: s.agent,
                scale_error: s.scale_error,
                submaps: sms
                    .iter()
                    .map(|m| SubmapTruth {
                        index: m.id.index,
                        local_to_world: m.local_to_world.to_array(),
                    })
                    .collect(),
                trajectory: sms
                    .iter()
                    .flat_map(|m| m.keyframes.iter())
                    .map(|k| TumPose::from_sim3(k.timestamp, &k.world_pose))
                    .collect(),
                surface_voxels: surface_voxels(sms.iter().flat_map(|m| m.surface.iter())),
            })
            .collect(),
    };
    Scenario {
        config: config.clone(),
        scene,
        scripts,
        submaps,
        events,
        ground_truth,
    }
}

fn surface_voxels<'a>(points: impl Iterator<Item = &'a Vector3<f64>>) -> Vec<u64> {
    let keys: std::collections::BTreeSet<u64> = points
        .filter_map(|p| voxel_key(p, COVERAGE_VOXEL).ok())
        .collect();
    keys.into_iter().collect()
}

/// World-frame surface samples of every submap of `agent`.
pub fn agent_surface(scenario: &Scenario, agent: u32) -> Vec<Vector3<f64>> {
    scenario
        .submaps
        .get(agent as usize)
        .map(|v| v.iter().flat_map(|s| s.surface.iter().copied()).collect())
        .unwrap_or_default()
}
