//! File exports of a run.
//!
//! ```text
//! report.json                 RunReport
//! audit.jsonl                 one verification record per candidate pair
//! graph.json                  nodes, edges and total cost
//! trajectories/agent_<a>.tum  estimated keyframe trajectory
//! maps/agent_<a>.ply          fused map per target agent
//! maps/global.ply             global map
//! ground_truth.json, ground_truth/agent_<a>.tum, stream.bin   when supplied
//! ```
//!
//! An empty run writes only `report.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{CoordinatorError, RunOutput};
use crate::fusion::{write_ply, GaussianPrimitive};
use crate::simworld::{format_tum, GroundTruth};

#[derive(Clone, Copy, Debug, Default)]
pub struct ArtifactOptions<'a> {
    pub truth: Option<&'a GroundTruth>,
    pub stream: Option<&'a [u8]>,
}

fn json_pretty<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("report types serialize");
    out.push(b'\n');
    out
}

fn ply(path: &Path, gaussians: &[GaussianPrimitive]) -> Result<(), CoordinatorError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ply(&mut w, gaussians)?;
    w.flush()?;
    Ok(())
}

/// Writes the artifacts of `output` under `dir` and returns the written paths.
pub fn write_artifacts(
    dir: &Path,
    output: &RunOutput,
    options: ArtifactOptions,
) -> Result<Vec<PathBuf>, CoordinatorError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, bytes: &[u8]| -> Result<(), CoordinatorError> {
        fs::write(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    put(dir.join("report.json"), &json_pretty(&output.report))?;
    if output.is_empty() {
        return Ok(written);
    }

    let mut audit = Vec::new();
    for r in &output.report.audit {
        serde_json::to_writer(&mut audit, r).expect("audit serializes");
        audit.push(b'\n');
    }
    put(dir.join("audit.jsonl"), &audit)?;
    put(dir.join("graph.json"), &json_pretty(&output.graph))?;

    let traj = dir.join("trajectories");
    fs::create_dir_all(&traj)?;
    for (agent, poses) in &output.trajectories {
        put(traj.join(format!("agent_{agent}.tum")), format_tum(poses).as_bytes())?;
    }
    if let Some(truth) = options.truth {
        put(dir.join("ground_truth.json"), &json_pretty(truth))?;
        let gt = dir.join("ground_truth");
        fs::create_dir_all(&gt)?;
        for a in &truth.agents {
            put(gt.join(format!("agent_{}.tum", a.agent)), format_tum(&a.trajectory).as_bytes())?;
        }
    }
    if let Some(stream) = options.stream {
        put(dir.join("stream.bin"), stream)?;
    }

    let maps = dir.join("maps");
    fs::create_dir_all(&maps)?;
    for (agent, gaussians) in &output.agent_maps {
        let path = maps.join(format!("agent_{agent}.ply"));
        ply(&path, gaussians)?;
        written.push(path);
    }
    let path = maps.join("global.ply");
    ply(&path, &output.global_map)?;
    written.push(path);
    Ok(written)
}
