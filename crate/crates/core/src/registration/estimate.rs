//! Closed-form similarity alignment and its robust RANSAC wrapper.

use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Correspondence, RegistrationError};
use crate::liegroup::Sim3;

/// Least-squares similarity `T` minimizing `Σ‖t_i − T(s_i)‖²`.
///
/// Reflections are suppressed through the sign of `det(U Vᵀ)`. Fails when the
/// source has no spread or the cross-covariance has rank below two.
pub fn umeyama(src: &[Vector3<f64>], tgt: &[Vector3<f64>]) -> Result<Sim3, RegistrationError> {
    if src.len() != tgt.len() {
        return Err(RegistrationError::LengthMismatch(src.len(), tgt.len()));
    }
    if src.len() < 3 {
        return Err(RegistrationError::Degenerate(format!(
            "{} pairs, need at least 3",
            src.len()
        )));
    }
    let n = src.len() as f64;
    let mean_s = src.iter().sum::<Vector3<f64>>() / n;
    let mean_t = tgt.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, t) in src.iter().zip(tgt) {
        let ds = s - mean_s;
        cov += (t - mean_t) * ds.transpose();
        var_s += ds.norm_squared();
    }
    cov /= n;
    var_s /= n;
    let spread = mean_s.norm().max(1.0);
    if var_s <= 1e-24 * spread * spread {
        return Err(RegistrationError::Degenerate("source variance is zero".into()));
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let sv = svd.singular_values;
    if sv[1] <= 1e-12 * sv[0].max(f64::MIN_POSITIVE) {
        return Err(RegistrationError::Degenerate(format!(
            "cross-covariance rank below 2 (singular values {:.3e}, {:.3e}, {:.3e})",
            sv[0], sv[1], sv[2]
        )));
    }
    let mut d = Vector3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        d[2] = -1.0;
    }
    let rot = u * Matrix3::from_diagonal(&d) * v_t;
    let scale = sv.dot(&d) / var_s;
    if !(scale > 0.0) {
        return Err(RegistrationError::Degenerate(format!("scale {scale}")));
    }
    let translation = mean_t - scale * rot * mean_s;
    Ok(Sim3::from_matrix_parts(scale, &rot, translation))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    pub inlier_dist: f64,
    pub sample_size: usize,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 256,
            inlier_dist: 0.15,
            sample_size: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RansacResult {
    pub transform: Sim3,
    /// Indices into the correspondence set, ascending.
    pub inliers: Vec<usize>,
    /// RMSE of the inliers under `transform`.
    pub inlier_rmse: f64,
}

fn score(t: &Sim3, m: &[Correspondence], dist: f64) -> (Vec<usize>, f64) {
    let mut inl = Vec::new();
    let mut sq = 0.0;
    for (i, c) in m.iter().enumerate() {
        let e = (t.act(&c.source) - c.target).norm_squared();
        if e <= dist * dist {
            inl.push(i);
            sq += e;
        }
    }
    let rmse = if inl.is_empty() {
        f64::INFINITY
    } else {
        (sq / inl.len() as f64).sqrt()
    };
    (inl, rmse)
}

fn fit(m: &[Correspondence], idx: &[usize]) -> Result<Sim3, RegistrationError> {
    let s: Vec<_> = idx.iter().map(|&i| m[i].source).collect();
    let t: Vec<_> = idx.iter().map(|&i| m[i].target).collect();
    umeyama(&s, &t)
}

/// Hypothesize-and-verify over seeded minimal samples, keeping the model with
/// the most inliers (ties: lower inlier RMSE), then re-fitting on all of its
/// inliers.
pub fn ransac_umeyama(
    m: &[Correspondence],
    params: &RansacParams,
    seed: u64,
) -> Result<RansacResult, RegistrationError> {
    if m.len() < 3 {
        return Err(RegistrationError::EstimationFailed(format!(
            "{} correspondences, need at least 3",
            m.len()
        )));
    }
    let k = params.sample_size.clamp(3, m.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..params.iterations {
        let mut idx = sample(&mut rng, m.len(), k).into_vec();
        idx.sort_unstable();
        let Ok(t) = fit(m, &idx) else { continue };
        let (inl, rmse) = score(&t, m, params.inlier_dist);
        let better = match &best {
            None => true,
            Some((b, brmse)) => inl.len() > b.len() || (inl.len() == b.len() && rmse < *brmse),
        };
        if better {
            best = Some((inl, rmse));
        }
    }
    let (inliers, _) = best.filter(|(b, _)| b.len() >= 3).ok_or_else(|| {
        RegistrationError::EstimationFailed("no hypothesis reached 3 inliers".into())
    })?;
    let transform = fit(m, &inliers)?;
    let sq: f64 = inliers
        .iter()
        .map(|&i| (transform.act(&m[i].source) - m[i].target).norm_squared())
        .sum();
    let inlier_rmse = (sq / inliers.len() as f64).sqrt();
    Ok(RansacResult {
        transform,
        inliers,
        inlier_rmse,
    })
}
