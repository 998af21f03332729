//! Keyframe partitioning, submap assembly and scripted pose-graph updates.
//!
//! An agent's local frame is `L = D ∘ S ∘ W⁻¹`, where `W` is its first world
//! camera pose, `S` its constant scale error and `D` the odometry drift
//! accumulated at the submap's first keyframe. Ground truth for a submap is
//! `L⁻¹`, the local-to-world similarity.

use std::collections::BTreeSet;
use std::ops::Range;

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::PgbaScript;
use super::scene::{render, SceneModel};
use crate::camera::{Grid, Image, Intrinsics};
use crate::fusion::{transform_gaussian, FusionKeyframe, GaussianPrimitive, SubmapMap};
use crate::liegroup::{Sim3, Sim3Tangent};
use crate::summary::{
    build_summary, Aabb, AnchorKeyframe, SubmapId, SubmapSummary, SummaryParams, DESCRIPTOR_DIM,
};
use crate::voxel::voxel_key;

/// Pixel stride for Gaussian seeding, surface samples and keyframe images.
pub const SEED_STRIDE: usize = 4;
/// World-frame voxel used to decimate seeded Gaussians.
pub const DECIMATE_VOXEL: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct AgentScript {
    pub agent: u32,
    /// World camera-to-world rigid poses.
    pub poses: Vec<Sim3>,
    pub timestamps: Vec<f64>,
    pub scale_error: f64,
    /// Per-keyframe drift noise (rad, local units).
    pub drift_rot: f64,
    pub drift_trans: f64,
    pub pgba: Vec<PgbaScript>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimParams {
    pub k_max: usize,
    pub tau_move: f64,
    pub intrinsics: Intrinsics,
    pub width: usize,
    pub height: usize,
    /// Summary point noise, meters.
    pub point_noise: f64,
    pub exposure_gain: f64,
    pub exposure_bias: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimKeyframe {
    pub timestamp: f64,
    pub world_pose: Sim3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimSubmap {
    pub id: SubmapId,
    pub keyframes: Vec<SimKeyframe>,
    pub map: SubmapMap,
    pub summary: SubmapSummary,
    pub local_to_world: Sim3,
    /// World-frame surface samples seen by this submap's keyframes.
    pub surface: Vec<Vector3<f64>>,
}

/// Greedy freeze partition: a submap closes once it holds `k_max` keyframes
/// or its largest pairwise center distance exceeds `tau_move`. A trailing
/// partial submap is closed at the end of the sequence.
pub fn partition(centers: &[Vector3<f64>], k_max: usize, tau_move: f64) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut span: f64 = 0.0;
    for i in 0..centers.len() {
        for j in start..i {
            span = span.max((centers[i] - centers[j]).norm());
        }
        if i + 1 - start >= k_max || span > tau_move {
            out.push(start..i + 1);
            start = i + 1;
            span = 0.0;
        }
    }
    if start < centers.len() {
        out.push(start..centers.len());
    }
    out
}

/// 128-entry descriptor: a trilinear 4×4×4 histogram of world positions over
/// `bounds` followed by a 64-bin intensity histogram weighted by 0.25.
pub fn global_descriptor(points: &[Vector3<f64>], image: &Grid, bounds: &Aabb) -> Vec<f64> {
    let mut pos = [0.0f64; 64];
    let extent = (bounds.max - bounds.min).map(|e| e.max(1e-9));
    for p in points {
        let u = (p - bounds.min).component_div(&extent) * 4.0 - Vector3::repeat(0.5);
        let base = u.map(|c| c.floor());
        let frac = u - base;
        for corner in 0..8 {
            let mut w = 1.0;
            let mut idx = 0;
            for axis in 0..3 {
                let hi = (corner >> axis) & 1 == 1;
                w *= if hi { frac[axis] } else { 1.0 - frac[axis] };
                let c = (base[axis] as i64 + hi as i64).clamp(0, 3) as usize;
                idx = idx * 4 + c;
            }
            pos[idx] += w;
        }
    }
    let mut tex = [0.0f64; 64];
    for v in &image.data {
        let x = (*v as f64).clamp(0.0, 1.0) * 63.0;
        let i = (x.floor() as usize).min(62);
        let f = x - i as f64;
        tex[i] += 1.0 - f;
        tex[i + 1] += f;
    }
    let unit = |h: &[f64]| -> Vec<f64> {
        let n = h.iter().map(|x| x * x).sum::<f64>().sqrt();
        h.iter().map(|x| if n > 0.0 { x / n } else { 0.0 }).collect()
    };
    let mut d = unit(&pos);
    d.extend(unit(&tex).into_iter().map(|x| 0.25 * x));
    let out = unit(&d);
    debug_assert_eq!(out.len(), DESCRIPTOR_DIM);
    out
}

fn subsample(g: &Grid, stride: usize) -> Grid {
    let (w, h) = (g.width.div_ceil(stride), g.height.div_ceil(stride));
    Grid::from_fn(w, h, |x, y| g.get(x * stride, y * stride))
}

fn normal_rotation(n: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::rotation_between(&Vector3::z(), n)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI))
}

/// Drift similarity at every keyframe: a random walk of rigid tangent steps.
fn drift_walk<R: Rng>(script: &AgentScript, rng: &mut R) -> Vec<Sim3> {
    let rot = Normal::new(0.0, script.drift_rot.max(0.0)).expect("finite");
    let trans = Normal::new(0.0, script.drift_trans.max(0.0)).expect("finite");
    let mut d = Sim3::identity();
    let mut out = vec![d];
    for _ in 1..script.poses.len() {
        let step = Sim3Tangent::new(
            Vector3::from_fn(|_, _| trans.sample(rng)),
            Vector3::from_fn(|_, _| rot.sample(rng)),
            0.0,
        );
        d = d.compose(&Sim3::exp(&step));
        out.push(d);
    }
    out
}

/// Freezes the agent's keyframes into submaps with local-frame content,
/// summaries and ground truth.
pub fn build_submaps<R: Rng>(
    script: &AgentScript,
    scene: &SceneModel,
    params: &SimParams,
    rng: &mut R,
) -> Vec<SimSubmap> {
    if script.poses.is_empty() {
        return Vec::new();
    }
    let s = script.scale_error;
    let base = Sim3::from_scale(s).compose(&script.poses[0].inverse());
    let centers: Vec<Vector3<f64>> = script
        .poses
        .iter()
        .map(|p| base.act(p.translation()))
        .collect();
    let ranges = partition(&centers, params.k_max, params.tau_move);
    let drift = drift_walk(script, rng);
    let bounds = scene.bounds();
    let gain = Normal::new(0.0, params.exposure_gain).expect("finite");
    let bias = Normal::new(0.0, params.exposure_bias).expect("finite");
    let noise = Normal::new(0.0, params.point_noise * s).expect("finite");
    let k = params.intrinsics;
    let (w, h) = (params.width, params.height);

    let mut out = Vec::with_capacity(ranges.len());
    for (index, range) in ranges.into_iter().enumerate() {
        let id = SubmapId::new(script.agent, index as u32);
        let to_local = drift[range.start].compose(&base);
        let local_to_world = to_local.inverse();
        let anchor_at = range.start + range.len() / 2;
        let mut keyframes = Vec::new();
        let mut fusion_keyframes = Vec::new();
        let mut gaussians = Vec::new();
        let mut surface = Vec::new();
        let mut anchor = None;
        for i in range.clone() {
            let pose_w = script.poses[i];
            let r = render(scene, &pose_w, &k, w, h);
            let local_pose = to_local
                .compose(&pose_w)
                .compose(&Sim3::from_scale(1.0 / s))
                .with_scale(1.0);
            let g = gain.sample(rng).exp();
            let b = bias.sample(rng);
            let captured = Grid::from_fn(w, h, |x, y| (g * r.intensity.get(x, y) as f64 + b) as f32);
            let disparity = Grid::from_fn(w, h, |x, y| match r.hits[y * w + x] {
                Some(hit) => (1.0 / (s * hit.t)) as f32,
                None => 0.0,
            });
            let rot_local = to_local.rotation();
            for y in (0..h).step_by(SEED_STRIDE) {
                for x in (0..w).step_by(SEED_STRIDE) {
                    let Some(hit) = r.hits[y * w + x] else { continue };
                    surface.push(hit.point);
                    let ray = pose_w.rotation_matrix() * k.ray(x as f64, y as f64);
                    let cos = (ray.normalize().dot(&hit.normal)).abs().max(0.2);
                    let footprint = SEED_STRIDE as f64 * hit.t / k.fx * s;
                    let c = hit.intensity;
                    gaussians.push(GaussianPrimitive {
                        mean: to_local.act(&hit.point),
                        scales: Vector3::new(0.5 * footprint / cos, 0.5 * footprint / cos, 0.1 * footprint),
                        rotation: rot_local * normal_rotation(&hit.normal),
                        opacity: 0.9,
                        color: [c, c, c],
                    });
                }
            }
            if i == anchor_at {
                anchor = Some((
                    AnchorKeyframe {
                        pose: local_pose,
                        image: Image::gray(captured.clone()),
                        disparity: disparity.clone(),
                        intrinsics: k,
                    },
                    r.intensity.clone(),
                ));
            }
            fusion_keyframes.push(FusionKeyframe {
                timestamp: script.timestamps[i],
                pose: local_pose,
                disparity,
                intrinsics: k,
                captured: Some(subsample(&captured, SEED_STRIDE)),
                reference: Some(subsample(&r.intensity, SEED_STRIDE)),
            });
            keyframes.push(SimKeyframe {
                timestamp: script.timestamps[i],
                world_pose: pose_w,
            });
        }
        let (anchor, reference) = anchor.expect("anchor inside range");
        let descriptor = global_descriptor(&surface, &reference, &bounds);
        let geometry: Vec<Vector3<f64>> = gaussians.iter().map(|g| g.mean).collect();
        let mut summary = build_summary(id, anchor, &geometry, descriptor, &SummaryParams::default())
            .expect("simulated summaries are valid");
        for p in summary.salient.iter_mut() {
            p.position += Vector3::from_fn(|_, _| noise.sample(rng));
        }
        for p in summary.cloud.iter_mut() {
            *p += Vector3::from_fn(|_, _| noise.sample(rng));
        }
        summary.recompute_aabb();

        let mut seen = BTreeSet::new();
        gaussians.retain(|g| match voxel_key(&local_to_world.act(&g.mean), DECIMATE_VOXEL) {
            Ok(key) => seen.insert(key),
            Err(_) => false,
        });
        out.push(SimSubmap {
            id,
            keyframes,
            map: SubmapMap {
                id,
                gaussians,
                keyframes: fusion_keyframes,
            },
            summary,
            local_to_world,
            surface,
        });
    }
    out
}

/// Pose-graph update message: keyframe centers before and after.
#[derive(Clone, Debug, PartialEq)]
pub struct PgbaMessage {
    pub id: SubmapId,
    pub pre: Vec<Vector3<f64>>,
    pub post: Vec<Vector3<f64>>,
}

/// Rigid `Δ` with the scripted angle and shift along seeded directions.
pub fn event_delta<R: Rng>(event: &PgbaScript, rng: &mut R) -> Sim3 {
    let mut dir = || {
        let n = Normal::new(0.0, 1.0).expect("finite");
        Vector3::from_fn(|_, _| n.sample(rng)).normalize()
    };
    let axis = dir();
    let shift = dir();
    Sim3::new(
        1.0,
        UnitQuaternion::from_scaled_axis(axis * event.angle),
        shift * event.shift,
    )
}

/// Moves every local quantity of `submap` by `delta`.
pub fn rewrite_submap(submap: &SimSubmap, delta: &Sim3) -> SimSubmap {
    let mut out = submap.clone();
    let sd = delta.scale();
    let move_pose = |p: &Sim3| delta.compose(p).compose(&Sim3::from_scale(1.0 / sd)).with_scale(1.0);
    let scale_disp = |g: &Grid| Grid::from_fn(g.width, g.height, |x, y| (g.get(x, y) as f64 / sd) as f32);
    out.map.gaussians = submap
        .map
        .gaussians
        .iter()
        .map(|g| transform_gaussian(g, delta))
        .collect();
    for kf in out.map.keyframes.iter_mut() {
        kf.pose = move_pose(&kf.pose);
        kf.disparity = scale_disp(&kf.disparity);
    }
    let sm = &mut out.summary;
    for p in sm.salient.iter_mut() {
        p.position = delta.act(&p.position);
    }
    for p in sm.cloud.iter_mut() {
        *p = delta.act(p);
    }
    sm.anchor.pose = move_pose(&sm.anchor.pose);
    sm.anchor.disparity = scale_disp(&sm.anchor.disparity);
    sm.recompute_aabb();
    out.local_to_world = submap.local_to_world.compose(&delta.inverse());
    out
}

/// Builds the update message for `event` and the submap after the update.
/// Post centers are `Δ(pre)` plus isotropic noise `σ`; geometry moves by `Δ`.
pub fn emit_pgba_event<R: Rng>(
    submap: &SimSubmap,
    event: &PgbaScript,
    rng: &mut R,
) -> (PgbaMessage, SimSubmap) {
    let delta = event_delta(event, rng);
    let noise = Normal::new(0.0, event.sigma.max(0.0)).expect("finite");
    let pre: Vec<Vector3<f64>> = submap
        .map
        .keyframes
        .iter()
        .map(|k| *k.pose.translation())
        .collect();
    let post = pre
        .iter()
        .map(|p| delta.act(p) + Vector3::from_fn(|_, _| noise.sample(rng)))
        .collect();
    (
        PgbaMessage {
            id: submap.id,
            pre,
            post,
        },
        rewrite_submap(submap, &delta),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, step: f64) -> Vec<Vector3<f64>> {
        (0..n).map(|i| Vector3::new(i as f64 * step, 0.0, 0.0)).collect()
    }

    #[test]
    fn count_rule() {
        assert_eq!(partition(&line(8, 1e-3), 8, 2.0), vec![0..8]);
        assert_eq!(partition(&line(9, 1e-3), 8, 2.0), vec![0..8, 8..9]);
        assert!(partition(&[], 8, 2.0).is_empty());
    }

    #[test]
    fn distance_rule_on_straight_walk() {
        // Centers at 0, 0.5, ..., 5.0: the span first exceeds 2 m at 2.5 m.
        let parts = partition(&line(11, 0.5), 8, 2.0);
        assert_eq!(parts, vec![0..6, 6..11]);
    }

    #[test]
    fn descriptor_is_unit_and_position_sensitive() {
        let b = Aabb::new(Vector3::zeros(), Vector3::repeat(4.0));
        let img = Grid::from_fn(8, 8, |x, _| x as f32 / 8.0);
        let a = global_descriptor(&[Vector3::new(0.5, 0.5, 0.5)], &img, &b);
        let c = global_descriptor(&[Vector3::new(3.5, 3.5, 3.5)], &img, &b);
        let dot: f64 = a.iter().zip(&c).map(|(x, y)| x * y).sum();
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(dot < 0.1);
    }
}
