//! Occupancy-aware fusion of borrowed Gaussians into a target agent's map.
//!
//! Borrowed Gaussians are moved into the global frame by their submap
//! corrections and kept only where the target agent has neither geometry
//! (occupied voxels from its Gaussian envelopes) nor observed free space
//! (voxels carved by rays from its keyframes). A per-keyframe affine exposure
//! model is fitted against reference renders.

mod grid;
mod ply;

pub use grid::{
    build_occupied, carve_free, carve_keyframe, dedup, envelope_half_extents, CarveParams,
    OccupancyGrid,
};
pub use ply::{read_ply, write_ply, PlyError};

use nalgebra::{UnitQuaternion, Vector3};

use crate::camera::{Grid, Intrinsics};
use crate::liegroup::Sim3;
use crate::summary::SubmapId;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrimitive {
    pub mean: Vector3<f64>,
    pub scales: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    pub opacity: f64,
    pub color: [f64; 3],
}

impl GaussianPrimitive {
    /// `R diag(s²) Rᵀ`.
    pub fn covariance(&self) -> nalgebra::Matrix3<f64> {
        let r = self.rotation.to_rotation_matrix().into_inner();
        let s2 = self.scales.component_mul(&self.scales);
        r * nalgebra::Matrix3::from_diagonal(&s2) * r.transpose()
    }

    pub fn is_valid(&self) -> bool {
        self.scales.iter().all(|s| *s > 0.0) && (0.0..=1.0).contains(&self.opacity)
    }
}

/// Maps a Gaussian through a similarity; opacity and color are unchanged.
pub fn transform_gaussian(g: &GaussianPrimitive, c: &Sim3) -> GaussianPrimitive {
    let q = c.rotation() * g.rotation;
    GaussianPrimitive {
        mean: c.act(&g.mean),
        scales: g.scales * c.scale(),
        rotation: UnitQuaternion::new_normalize(q.into_inner()),
        opacity: g.opacity,
        color: g.color,
    }
}

/// Keyframe payload used for carving and exposure fitting. `pose` is
/// camera-to-submap-local with unit scale; `disparity` is in local units.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionKeyframe {
    pub timestamp: f64,
    pub pose: Sim3,
    pub disparity: Grid,
    pub intrinsics: Intrinsics,
    /// Image as captured by the agent, possibly subsampled by an integer
    /// stride relative to `disparity`.
    pub captured: Option<Grid>,
    /// Exposure-neutral render of the same view, shaped like `captured`.
    pub reference: Option<Grid>,
}

/// One submap's map content in its local frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SubmapMap {
    pub id: SubmapId,
    pub gaussians: Vec<GaussianPrimitive>,
    pub keyframes: Vec<FusionKeyframe>,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExposureModel {
    pub log_gain: f64,
    pub bias: f64,
}

impl ExposureModel {
    pub fn apply(&self, intensity: f64) -> f64 {
        self.log_gain.exp() * intensity + self.bias
    }
}

const MIN_GAIN: f64 = 1e-3;

/// Least-squares `(ln g, b)` with `g·rendered + b ≈ reference` over the mask.
///
/// A non-positive unconstrained gain is clamped to `1e-3` with the bias
/// refit; a constant rendering gives zero log-gain and the mean difference.
/// Returns `None` with fewer than two valid pixels.
pub fn fit_exposure(rendered: &[f64], reference: &[f64], mask: &[bool]) -> Option<ExposureModel> {
    let pairs: Vec<(f64, f64)> = rendered
        .iter()
        .zip(reference)
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|((r, i), _)| (*r, *i))
        .collect();
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mean_r = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_i = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let var: f64 = pairs.iter().map(|p| (p.0 - mean_r).powi(2)).sum();
    let cov: f64 = pairs.iter().map(|p| (p.0 - mean_r) * (p.1 - mean_i)).sum();
    if var <= 1e-18 * n.max(1.0) {
        return Some(ExposureModel {
            log_gain: 0.0,
            bias: mean_i - mean_r,
        });
    }
    let mut gain = cov / var;
    if gain <= 0.0 {
        gain = MIN_GAIN;
    }
    Some(ExposureModel {
        log_gain: gain.ln(),
        bias: mean_i - gain * mean_r,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionParams {
    pub voxel: f64,
    pub envelope: f64,
    pub carve: CarveParams,
    pub min_opacity: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            voxel: 0.10,
            envelope: 1.0,
            carve: CarveParams::default(),
            min_opacity: 0.005,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FusionStats {
    pub target_gaussians: usize,
    pub borrowed_gaussians: usize,
    pub retained_borrowed: usize,
    pub pruned: usize,
    pub occupied_voxels: usize,
    pub free_voxels: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusedMap {
    /// Target Gaussians first (submap order), then retained borrowed ones.
    pub gaussians: Vec<GaussianPrimitive>,
    /// Number of leading entries of `gaussians` that belong to the target.
    pub target_count: usize,
    /// One entry per target keyframe with a captured and reference image.
    pub exposures: Vec<(SubmapId, usize, ExposureModel)>,
    pub grid: OccupancyGrid,
    pub stats: FusionStats,
}

/// Fuses `borrowed` submaps into the `target` agent's map, each paired with
/// its correction into the global frame.
pub fn fuse(
    target: &[(&SubmapMap, Sim3)],
    borrowed: &[(&SubmapMap, Sim3)],
    params: &FusionParams,
) -> FusedMap {
    let target_g: Vec<GaussianPrimitive> = target
        .iter()
        .flat_map(|(m, c)| m.gaussians.iter().map(move |g| transform_gaussian(g, c)))
        .collect();
    let borrowed_g: Vec<GaussianPrimitive> = borrowed
        .iter()
        .flat_map(|(m, c)| m.gaussians.iter().map(move |g| transform_gaussian(g, c)))
        .collect();
    let keyframes: Vec<(&FusionKeyframe, Sim3)> = target
        .iter()
        .flat_map(|(m, c)| m.keyframes.iter().map(move |k| (k, *c)))
        .collect();
    let mut grid = OccupancyGrid::new(params.voxel);
    if !borrowed_g.is_empty() {
        grid.occupied = build_occupied(&target_g, params.voxel, params.envelope);
        grid.free = carve_free(
            &keyframes,
            &CarveParams {
                voxel: params.voxel,
                ..params.carve
            },
        );
    }
    let retained = dedup(&borrowed_g, &grid);
    let mut stats = FusionStats {
        target_gaussians: target_g.len(),
        borrowed_gaussians: borrowed_g.len(),
        retained_borrowed: retained.len(),
        occupied_voxels: grid.occupied.len(),
        free_voxels: grid.free.len(),
        ..Default::default()
    };
    let keep = |g: &GaussianPrimitive| g.opacity >= params.min_opacity;
    let target_count = target_g.iter().filter(|g| keep(g)).count();
    let before = target_g.len() + retained.len();
    let gaussians: Vec<GaussianPrimitive> = target_g
        .into_iter()
        .chain(retained)
        .filter(|g| keep(g))
        .collect();
    stats.pruned = before - gaussians.len();

    let mut exposures = Vec::new();
    for (m, _) in target {
        for (k, kf) in m.keyframes.iter().enumerate() {
            let (Some(cap), Some(reference)) = (&kf.captured, &kf.reference) else {
                continue;
            };
            let rendered: Vec<f64> = reference.data.iter().map(|v| *v as f64).collect();
            let observed: Vec<f64> = cap.data.iter().map(|v| *v as f64).collect();
            let stride = (kf.disparity.width / cap.width.max(1)).max(1);
            let mask: Vec<bool> = (0..cap.height)
                .flat_map(|y| (0..cap.width).map(move |x| (x * stride, y * stride)))
                .map(|(x, y)| {
                    x < kf.disparity.width
                        && y < kf.disparity.height
                        && kf.disparity.get(x, y) > 0.0
                })
                .collect();
            if let Some(e) = fit_exposure(&rendered, &observed, &mask) {
                exposures.push((m.id, k, e));
            }
        }
    }
    FusedMap {
        gaussians,
        target_count,
        exposures,
        grid,
        stats,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g() -> GaussianPrimitive {
        GaussianPrimitive {
            mean: Vector3::new(1.0, -2.0, 0.5),
            scales: Vector3::new(0.1, 0.2, 0.05),
            rotation: UnitQuaternion::from_scaled_axis(Vector3::new(0.3, 0.1, -0.7)),
            opacity: 0.7,
            color: [0.1, 0.5, 0.9],
        }
    }

    #[test]
    fn identity_and_pure_scale() {
        let a = transform_gaussian(&g(), &Sim3::identity());
        assert!((a.mean - g().mean).norm() < 1e-15);
        assert!(a.rotation.angle_to(&g().rotation) < 1e-12);
        let b = transform_gaussian(&g(), &Sim3::from_scale(2.0));
        assert!((b.mean - 2.0 * g().mean).norm() < 1e-15);
        assert!((b.scales - 2.0 * g().scales).norm() < 1e-15);
        assert_eq!((b.opacity, b.color), (g().opacity, g().color));
    }

    #[test]
    fn exposure_exact_models() {
        let r: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 0.5 + 0.5).collect();
        let mask = vec![true; r.len()];
        let e = fit_exposure(&r, &r, &mask).unwrap();
        assert!(e.log_gain.abs() < 1e-12 && e.bias.abs() < 1e-12);
        let i: Vec<f64> = r.iter().map(|v| 2.0 * v + 0.1).collect();
        let e = fit_exposure(&r, &i, &mask).unwrap();
        assert!((e.log_gain - 2f64.ln()).abs() < 1e-9 && (e.bias - 0.1).abs() < 1e-9);
        let flat = vec![0.4; 10];
        let e = fit_exposure(&flat, &vec![0.5; 10], &[true; 10]).unwrap();
        assert_eq!(e.log_gain, 0.0);
        assert!((e.bias - 0.1).abs() < 1e-12);
        let neg: Vec<f64> = r.iter().map(|v| 1.0 - v).collect();
        let e = fit_exposure(&r, &neg, &mask).unwrap();
        assert!((e.log_gain - MIN_GAIN.ln()).abs() < 1e-12);
        assert!(fit_exposure(&r[..1], &r[..1], &[true]).is_none());
    }

    #[test]
    fn fuse_without_borrowed_keeps_target() {
        let mut low = g();
        low.opacity = 0.001;
        let m = SubmapMap {
            id: SubmapId::new(0, 0),
            gaussians: vec![g(), low],
            keyframes: vec![],
        };
        let out = fuse(&[(&m, Sim3::identity())], &[], &FusionParams::default());
        assert_eq!(out.gaussians.len(), 1);
        assert_eq!(out.stats.pruned, 1);
    }
}
