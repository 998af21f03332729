//! Edge residuals and their Jacobians under right perturbation
//! `C ← C · exp(δ)` of either endpoint correction.

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::camera::Image;
use crate::liegroup::{skew, Matrix7, Sim3, Sim3Tangent, Vector7};
use crate::summary::AnchorKeyframe;

pub type Row7 = SMatrix<f64, 1, 7>;

/// `log(M⁻¹ ∘ C_tgt⁻¹ ∘ C_src)`.
pub fn geo_residual(measurement: &Sim3, c_src: &Sim3, c_tgt: &Sim3) -> Sim3Tangent {
    measurement
        .inverse()
        .compose(&c_tgt.inverse())
        .compose(c_src)
        .log()
}

/// Residual with `(d r / d δ_src, d r / d δ_tgt)`.
pub fn geo_residual_jacobians(
    measurement: &Sim3,
    c_src: &Sim3,
    c_tgt: &Sim3,
) -> (Vector7, Matrix7, Matrix7) {
    let r = geo_residual(measurement, c_src, c_tgt);
    let jr_inv = r.right_jacobian_inverse().unwrap_or_else(Matrix7::identity);
    let j_src = jr_inv;
    let j_tgt = -jr_inv * c_src.inverse().compose(c_tgt).adjoint_matrix();
    (r.to_vector(), j_src, j_tgt)
}

/// Source anchor samples in submap-local coordinates, built once per anchor.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AnchorCache {
    pub intensity: Vec<f64>,
    pub points: Vec<Vector3<f64>>,
}

impl AnchorCache {
    /// Valid-disparity pixels on a `stride` grid.
    pub fn build(anchor: &AnchorKeyframe, stride: usize) -> Self {
        let mut c = Self {
            intensity: Vec::new(),
            points: Vec::new(),
        };
        for y in (0..anchor.height()).step_by(stride.max(1)) {
            for x in (0..anchor.width()).step_by(stride.max(1)) {
                if let Some(p) = anchor.backproject(x, y) {
                    c.intensity.push(anchor.image.intensity(x, y));
                    c.points.push(p);
                }
            }
        }
        c
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One in-frame source sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhotoSample {
    /// Index into the source cache.
    pub pixel: usize,
    /// Sampled target image coordinates.
    pub u: f64,
    pub v: f64,
    pub residual: f64,
    pub jac_src: Row7,
    pub jac_tgt: Row7,
}

/// Source-minus-target intensity over cached source samples that land inside
/// the target anchor with positive depth. Jacobians are filled only when
/// `with_jacobians` is set.
pub fn pho_residual(
    src: &AnchorCache,
    target: &AnchorKeyframe,
    c_src: &Sim3,
    c_tgt: &Sim3,
    with_jacobians: bool,
) -> Vec<PhotoSample> {
    let rel = c_tgt.inverse().compose(c_src);
    let cam_from_local = target.pose.inverse();
    let r_cam = cam_from_local.rotation_matrix();
    let sr_rel = rel.scale() * rel.rotation_matrix();
    let img: &Image = &target.image;
    let mut out = Vec::new();
    for (i, p) in src.points.iter().enumerate() {
        let q = rel.act(p);
        let c = cam_from_local.act(&q);
        if c.z <= 0.0 {
            continue;
        }
        let Some((u, v)) = target.intrinsics.project(&c) else {
            continue;
        };
        let Some((value, gx, gy)) = img.sample_bilinear(u, v) else {
            continue;
        };
        let mut s = PhotoSample {
            pixel: i,
            u,
            v,
            residual: src.intensity[i] - value,
            jac_src: Row7::zeros(),
            jac_tgt: Row7::zeros(),
        };
        if with_jacobians {
            let dproj = target.intrinsics.project_jacobian(&c);
            // d r / d q, a row 3-vector.
            let grad = -(SMatrix::<f64, 1, 2>::new(gx, gy) * dproj * r_cam);
            let mut dq_src = SMatrix::<f64, 3, 7>::zeros();
            dq_src.fixed_view_mut::<3, 3>(0, 0).copy_from(&sr_rel);
            dq_src
                .fixed_view_mut::<3, 3>(0, 3)
                .copy_from(&(-sr_rel * skew(p)));
            dq_src.fixed_view_mut::<3, 1>(0, 6).copy_from(&(sr_rel * p));
            let mut dq_tgt = SMatrix::<f64, 3, 7>::zeros();
            dq_tgt
                .fixed_view_mut::<3, 3>(0, 0)
                .copy_from(&(-Matrix3::identity()));
            dq_tgt.fixed_view_mut::<3, 3>(0, 3).copy_from(&skew(&q));
            dq_tgt.fixed_view_mut::<3, 1>(0, 6).copy_from(&(-q));
            s.jac_src = grad * dq_src;
            s.jac_tgt = grad * dq_tgt;
        }
        out.push(s);
    }
    out
}

/// Huber loss on a squared norm: `s` below `knee²`, `2·knee·√s − knee²` above.
pub fn huber(s: f64, knee: f64) -> f64 {
    if s <= knee * knee {
        s
    } else {
        2.0 * knee * s.sqrt() - knee * knee
    }
}

/// `dρ/ds`, the iteratively-reweighted least-squares weight.
pub fn huber_weight(s: f64, knee: f64) -> f64 {
    if s <= knee * knee {
        1.0
    } else {
        knee / s.sqrt()
    }
}
