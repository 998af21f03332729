//! Line-oriented `key=value` scenario configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for '{key}': {message}")]
    Value {
        line: usize,
        key: String,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapPlan {
    /// All agents circle one room with staggered start phases.
    Ring,
    /// Every agent keeps looking at the same wall region.
    Full,
    /// Each agent stays in its own room.
    Disjoint,
    /// Two agents with exactly one scripted co-visible submap pair.
    Pair,
    /// Two agents in a featureless corridor sharing one small textured strip.
    Corridor,
}

impl FromStr for OverlapPlan {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ring" => Ok(Self::Ring),
            "full" => Ok(Self::Full),
            "disjoint" => Ok(Self::Disjoint),
            "pair" => Ok(Self::Pair),
            "corridor" => Ok(Self::Corridor),
            other => Err(format!("unknown overlap plan '{other}'")),
        }
    }
}

impl fmt::Display for OverlapPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Ring => "ring",
            Self::Full => "full",
            Self::Disjoint => "disjoint",
            Self::Pair => "pair",
            Self::Corridor => "corridor",
        };
        f.write_str(s)
    }
}

/// Scripted intra-agent pose-graph update of one submap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PgbaScript {
    pub agent: u32,
    pub submap: u32,
    /// Emitted once the agent has frozen this many submaps.
    pub after: u32,
    /// Rotation angle (rad) and translation (local units) of `Δ`.
    pub angle: f64,
    pub shift: f64,
    /// Per-center noise on the post-update centers.
    pub sigma: f64,
}

/// Keys recognized as verification or update threshold overrides.
pub const OVERRIDE_KEYS: [&str; 9] = [
    "tau_sim", "top_k", "tau_res", "tau_rig", "tau_ext", "min_inliers", "min_overlap",
    "min_fitness", "max_icp_rmse",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_agents: usize,
    pub plan: OverlapPlan,
    pub submaps_per_agent: usize,
    pub k_max: usize,
    pub tau_move: f64,
    /// Per-agent scale errors, cycled when shorter than `n_agents`.
    pub scale_errors: Vec<f64>,
    /// Gaussian noise on summary points, meters.
    pub point_noise: f64,
    /// Per-keyframe drift noise (rad, m).
    pub drift_rot: f64,
    pub drift_trans: f64,
    /// Standard deviations of per-keyframe log gain and bias.
    pub exposure_gain: f64,
    pub exposure_bias: f64,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub pgba: Vec<PgbaScript>,
    pub overrides: BTreeMap<String, f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_agents: 3,
            plan: OverlapPlan::Ring,
            submaps_per_agent: 12,
            k_max: 8,
            tau_move: 2.0,
            scale_errors: vec![0.6, 1.0, 1.7],
            point_noise: 0.01,
            drift_rot: 0.002,
            drift_trans: 0.004,
            exposure_gain: 0.02,
            exposure_bias: 0.01,
            width: 128,
            height: 96,
            focal: 100.0,
            pgba: Vec::new(),
            overrides: BTreeMap::new(),
        }
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e: T::Err| ConfigError::Value {
        line,
        key: key.to_string(),
        message: e.to_string(),
    })
}

fn parse_pgba(line: usize, v: &str) -> Result<Vec<PgbaScript>, ConfigError> {
    let err = |m: &str| ConfigError::Value {
        line,
        key: "pgba".into(),
        message: m.into(),
    };
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let f: Vec<&str> = item.split(':').collect();
            if f.len() != 6 {
                return Err(err("expected agent:submap:after:angle:shift:sigma"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(&e.to_string()));
            let int = |s: &str| s.parse::<u32>().map_err(|e| err(&e.to_string()));
            Ok(PgbaScript {
                agent: int(f[0])?,
                submap: int(f[1])?,
                after: int(f[2])?,
                angle: num(f[3])?,
                shift: num(f[4])?,
                sigma: num(f[5])?,
            })
        })
        .collect()
}

impl ScenarioConfig {
    /// Parses `key=value` lines on top of the defaults. Blank lines and `#`
    /// comments are ignored.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.split('#').next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            let (k, v) = s.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "seed" => c.seed = parse_value(line, k, v)?,
                "n_agents" => c.n_agents = parse_value(line, k, v)?,
                "plan" | "overlap" => c.plan = parse_value(line, k, v)?,
                "submaps_per_agent" => c.submaps_per_agent = parse_value(line, k, v)?,
                "k_max" => c.k_max = parse_value(line, k, v)?,
                "tau_move" => c.tau_move = parse_value(line, k, v)?,
                "scale_errors" => {
                    c.scale_errors = v
                        .split(',')
                        .map(|x| parse_value(line, k, x.trim()))
                        .collect::<Result<_, _>>()?
                }
                "point_noise" => c.point_noise = parse_value(line, k, v)?,
                "drift_rot" => c.drift_rot = parse_value(line, k, v)?,
                "drift_trans" => c.drift_trans = parse_value(line, k, v)?,
                "exposure_gain" => c.exposure_gain = parse_value(line, k, v)?,
                "exposure_bias" => c.exposure_bias = parse_value(line, k, v)?,
                "width" => c.width = parse_value(line, k, v)?,
                "height" => c.height = parse_value(line, k, v)?,
                "focal" => c.focal = parse_value(line, k, v)?,
                "pgba" => c.pgba = parse_pgba(line, v)?,
                _ if OVERRIDE_KEYS.contains(&k) => {
                    c.overrides.insert(k.to_string(), parse_value(line, k, v)?);
                }
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: k.to_string(),
                    })
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(1..=8).contains(&self.n_agents) {
            return bad(format!("n_agents {} outside [1, 8]", self.n_agents));
        }
        if self.scale_errors.is_empty()
            || self.scale_errors.iter().any(|s| !(0.33..=3.0).contains(s))
        {
            return bad("scale errors must lie in [0.33, 3.0]".into());
        }
        if self.k_max == 0 || self.submaps_per_agent == 0 {
            return bad("k_max and submaps_per_agent must be positive".into());
        }
        if self.width < 8 || self.height < 8 || self.focal <= 0.0 {
            return bad("resolution must be at least 8x8 with positive focal".into());
        }
        let noise = [
            self.point_noise,
            self.drift_rot,
            self.drift_trans,
            self.exposure_gain,
            self.exposure_bias,
            self.tau_move,
        ];
        if noise.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return bad("noise scales must be finite and non-negative".into());
        }
        let pair_like = matches!(self.plan, OverlapPlan::Pair | OverlapPlan::Corridor);
        if pair_like && self.n_agents != 2 {
            return bad(format!("plan {} needs exactly 2 agents", self.plan));
        }
        if self.plan == OverlapPlan::Disjoint && self.n_agents > 2 {
            return bad("disjoint plan supports at most 2 agents".into());
        }
        for e in &self.pgba {
            if e.agent as usize >= self.n_agents || e.after <= e.submap {
                return bad(format!("pgba event {e:?} must reference a frozen submap"));
            }
        }
        Ok(())
    }

    pub fn scale_error(&self, agent: usize) -> f64 {
        self.scale_errors[agent % self.scale_errors.len()]
    }

    /// Canonical `key=value` rendering accepted by [`ScenarioConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k}={v}\n"));
        kv("seed", self.seed.to_string());
        kv("n_agents", self.n_agents.to_string());
        kv("plan", self.plan.to_string());
        kv("submaps_per_agent", self.submaps_per_agent.to_string());
        kv("k_max", self.k_max.to_string());
        kv("tau_move", self.tau_move.to_string());
        let scales: Vec<String> = self.scale_errors.iter().map(f64::to_string).collect();
        kv("scale_errors", scales.join(","));
        kv("point_noise", self.point_noise.to_string());
        kv("drift_rot", self.drift_rot.to_string());
        kv("drift_trans", self.drift_trans.to_string());
        kv("exposure_gain", self.exposure_gain.to_string());
        kv("exposure_bias", self.exposure_bias.to_string());
        kv("width", self.width.to_string());
        kv("height", self.height.to_string());
        kv("focal", self.focal.to_string());
        if !self.pgba.is_empty() {
            let ev: Vec<String> = self
                .pgba
                .iter()
                .map(|e| {
                    format!(
                        "{}:{}:{}:{}:{}:{}",
                        e.agent, e.submap, e.after, e.angle, e.shift, e.sigma
                    )
                })
                .collect();
            kv("pgba", ev.join(";"));
        }
        for (k, v) in &self.overrides {
            kv(k, v.to_string());
        }
        out
    }
}
