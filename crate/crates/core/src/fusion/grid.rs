//! Occupied and free voxel sets for one target agent.

use std::collections::HashSet;

use nalgebra::Vector3;
use rayon::prelude::*;

use super::{FusionKeyframe, GaussianPrimitive};
use crate::liegroup::Sim3;
use crate::voxel::{voxel_key, VoxelIndex};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OccupancyGrid {
    pub voxel: f64,
    pub occupied: HashSet<u64>,
    pub free: HashSet<u64>,
}

impl OccupancyGrid {
    pub fn new(voxel: f64) -> Self {
        Self {
            voxel,
            ..Default::default()
        }
    }

    pub fn sorted_occupied(&self) -> Vec<u64> {
        sorted(&self.occupied)
    }

    pub fn sorted_free(&self) -> Vec<u64> {
        sorted(&self.free)
    }

    /// Whether a point falls in an occupied or free voxel. Points outside the
    /// key domain are never blocked.
    pub fn blocks(&self, p: &Vector3<f64>) -> bool {
        match voxel_key(p, self.voxel) {
            Ok(k) => self.occupied.contains(&k) || self.free.contains(&k),
            Err(_) => false,
        }
    }
}

fn sorted(s: &HashSet<u64>) -> Vec<u64> {
    let mut v: Vec<u64> = s.iter().copied().collect();
    v.sort_unstable();
    v
}

/// World-frame half extents of the `±k·s_i` box along the Gaussian's axes.
pub fn envelope_half_extents(g: &GaussianPrimitive, k: f64) -> Vector3<f64> {
    let r = g.rotation.to_rotation_matrix();
    let m = r.matrix().abs();
    m * (g.scales * k)
}

/// Keys of every voxel touched by the world AABB of each Gaussian's rotated
/// `±k·σ` envelope.
pub fn build_occupied(gaussians: &[GaussianPrimitive], voxel: f64, k: f64) -> HashSet<u64> {
    let mut out = HashSet::new();
    for g in gaussians {
        let h = envelope_half_extents(g, k);
        let (Ok(lo), Ok(hi)) = (
            VoxelIndex::of_point(&(g.mean - h), voxel),
            VoxelIndex::of_point(&(g.mean + h), voxel),
        ) else {
            continue;
        };
        for x in lo.x..=hi.x {
            for y in lo.y..=hi.y {
                for z in lo.z..=hi.z {
                    if let Ok(key) = VoxelIndex::new(x, y, z).key() {
                        out.insert(key);
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CarveParams {
    pub voxel: f64,
    /// Pixel stride in both image axes (4 gives one ray per 16 pixels).
    pub pixel_stride: usize,
    pub max_ray: f64,
}

impl Default for CarveParams {
    fn default() -> Self {
        Self {
            voxel: 0.10,
            pixel_stride: 4,
            max_ray: 8.0,
        }
    }
}

/// Free voxels along rays from each keyframe center toward its back-projected
/// depth samples, stepping `v/2` over `t ∈ [0, 1)` of the clamped ray length.
/// The voxel holding the (clamped) endpoint is never marked free.
/// `to_world` maps the keyframe's local frame into the grid frame.
pub fn carve_keyframe(kf: &FusionKeyframe, to_world: &Sim3, params: &CarveParams) -> HashSet<u64> {
    let mut out = HashSet::new();
    let step = params.voxel / 2.0;
    let cam_to_world = to_world.compose(&kf.pose);
    let center = cam_to_world.act(&Vector3::zeros());
    let stride = params.pixel_stride.max(1);
    for y in (0..kf.disparity.height).step_by(stride) {
        for x in (0..kf.disparity.width).step_by(stride) {
            let d = kf.disparity.get(x, y) as f64;
            if d <= 0.0 || !d.is_finite() {
                continue;
            }
            let end = cam_to_world.act(&kf.intrinsics.backproject(x as f64, y as f64, 1.0 / d));
            let delta = end - center;
            let full = delta.norm();
            if full <= 0.0 {
                continue;
            }
            let dir = delta / full;
            let len = full.min(params.max_ray);
            let end_key = voxel_key(&(center + dir * len), params.voxel).ok();
            let mut i = 0usize;
            loop {
                let t = i as f64 * step;
                if t >= len {
                    break;
                }
                if let Ok(k) = voxel_key(&(center + dir * t), params.voxel) {
                    if Some(k) != end_key {
                        out.insert(k);
                    }
                }
                i += 1;
            }
        }
    }
    out
}

/// Union of [`carve_keyframe`] over keyframes, computed in parallel.
pub fn carve_free(keyframes: &[(&FusionKeyframe, Sim3)], params: &CarveParams) -> HashSet<u64> {
    keyframes
        .par_iter()
        .map(|(kf, t)| carve_keyframe(kf, t, params))
        .reduce(HashSet::new, |mut a, b| {
            if a.len() < b.len() {
                let mut b = b;
                b.extend(a);
                return b;
            }
            a.extend(b);
            a
        })
}

/// Borrowed Gaussians whose mean lies in neither an occupied nor a free
/// voxel, in input order.
pub fn dedup(borrowed: &[GaussianPrimitive], grid: &OccupancyGrid) -> Vec<GaussianPrimitive> {
    borrowed
        .iter()
        .filter(|g| !grid.blocks(&g.mean))
        .cloned()
        .collect()
}
