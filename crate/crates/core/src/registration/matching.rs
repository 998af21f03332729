//! Salient-point descriptor matching and the dense fallback.

use nalgebra::Vector3;

use super::Correspondence;
use crate::summary::{AnchorKeyframe, LocalDescriptor, SubmapSummary};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchParams {
    /// Minimum cosine similarity of the best match.
    pub min_similarity: f64,
    /// Maximum ratio of best to second-best descriptor distance.
    pub max_ratio: f64,
    /// Minimum gap between best and second-best similarity.
    pub min_margin: f64,
    /// Below this many pairs the dense matcher is consulted.
    pub n_min: usize,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            min_similarity: 0.55,
            max_ratio: 0.90,
            min_margin: 0.02,
            n_min: 20,
        }
    }
}

fn is_zero(d: &LocalDescriptor) -> bool {
    d.iter().all(|x| *x == 0.0)
}

fn cosine(a: &LocalDescriptor, b: &LocalDescriptor) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

/// Descriptor distance between unit vectors with cosine `c`.
fn distance(c: f64) -> f64 {
    (2.0 - 2.0 * c).max(0.0).sqrt()
}

/// Mutual nearest neighbors in descriptor cosine similarity that pass the
/// absolute, ratio and margin gates, ordered by source index.
///
/// Ratio and margin compare each source point's best and second-best target;
/// a lone target passes both. Zero (flat-patch) descriptors never match.
pub fn match_summaries(
    src: &SubmapSummary,
    tgt: &SubmapSummary,
    params: &MatchParams,
) -> Vec<Correspondence> {
    let (ns, nt) = (src.salient.len(), tgt.salient.len());
    if ns == 0 || nt == 0 {
        return Vec::new();
    }
    let mut sim = vec![f64::NEG_INFINITY; ns * nt];
    for (i, a) in src.salient.iter().enumerate() {
        if is_zero(&a.descriptor) {
            continue;
        }
        for (j, b) in tgt.salient.iter().enumerate() {
            if !is_zero(&b.descriptor) {
                sim[i * nt + j] = cosine(&a.descriptor, &b.descriptor);
            }
        }
    }
    // Best source for every target column, first index on ties.
    let mut best_src = vec![usize::MAX; nt];
    for j in 0..nt {
        let mut bv = f64::NEG_INFINITY;
        for i in 0..ns {
            if sim[i * nt + j] > bv {
                bv = sim[i * nt + j];
                best_src[j] = i;
            }
        }
    }
    let mut out = Vec::new();
    for i in 0..ns {
        let row = &sim[i * nt..(i + 1) * nt];
        let (mut b1, mut j1, mut b2) = (f64::NEG_INFINITY, usize::MAX, f64::NEG_INFINITY);
        for (j, &v) in row.iter().enumerate() {
            if v > b1 {
                b2 = b1;
                b1 = v;
                j1 = j;
            } else if v > b2 {
                b2 = v;
            }
        }
        if j1 == usize::MAX || best_src[j1] != i || b1 < params.min_similarity {
            continue;
        }
        if b2.is_finite() {
            let d2 = distance(b2);
            let ratio_ok = if d2 > 0.0 {
                distance(b1) / d2 <= params.max_ratio
            } else {
                false
            };
            if !ratio_ok || b1 - b2 < params.min_margin {
                continue;
            }
        }
        out.push(Correspondence::new(
            i,
            src.salient[i].position,
            tgt.salient[j1].position,
            b1,
        ));
    }
    out
}

/// Pluggable dense correspondence source used when sparse matching is thin.
pub trait DenseMatcher: Send + Sync {
    /// Correspondences between the two summaries' anchors, in each submap's
    /// local frame. Source indices must not collide with each other.
    fn match_dense(&self, src: &SubmapSummary, tgt: &SubmapSummary) -> Vec<Correspondence>;
}

/// Grid-sampled anchor pixels matched by patch normalized cross-correlation,
/// mutual best over the target grid, then back-projected through disparity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchNccMatcher {
    pub source_stride: usize,
    pub target_stride: usize,
    pub half_window: usize,
    pub min_ncc: f64,
}

impl Default for PatchNccMatcher {
    fn default() -> Self {
        Self {
            source_stride: 8,
            target_stride: 4,
            half_window: 3,
            min_ncc: 0.8,
        }
    }
}

struct Patch {
    x: usize,
    y: usize,
    point: Vector3<f64>,
    values: Vec<f64>,
}

impl PatchNccMatcher {
    fn patches(&self, a: &AnchorKeyframe, stride: usize) -> Vec<Patch> {
        let r = self.half_window;
        let (w, h) = (a.width(), a.height());
        let mut out = Vec::new();
        if w <= 2 * r || h <= 2 * r {
            return out;
        }
        for y in (r..h - r).step_by(stride.max(1)) {
            for x in (r..w - r).step_by(stride.max(1)) {
                let Some(point) = a.backproject(x, y) else {
                    continue;
                };
                let mut values = Vec::with_capacity((2 * r + 1).pow(2));
                for py in y - r..=y + r {
                    for px in x - r..=x + r {
                        values.push(a.image.intensity(px, py));
                    }
                }
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                values.iter_mut().for_each(|v| *v -= mean);
                let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm < 1e-6 {
                    continue;
                }
                values.iter_mut().for_each(|v| *v /= norm);
                out.push(Patch {
                    x,
                    y,
                    point,
                    values,
                });
            }
        }
        out
    }
}

impl DenseMatcher for PatchNccMatcher {
    fn match_dense(&self, src: &SubmapSummary, tgt: &SubmapSummary) -> Vec<Correspondence> {
        let ps = self.patches(&src.anchor, self.source_stride);
        let pt = self.patches(&tgt.anchor, self.target_stride);
        if ps.is_empty() || pt.is_empty() {
            return Vec::new();
        }
        let ncc = |a: &Patch, b: &Patch| -> f64 {
            a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum()
        };
        let best_for_src: Vec<(usize, f64)> = ps
            .iter()
            .map(|a| {
                pt.iter()
                    .enumerate()
                    .map(|(j, b)| (j, ncc(a, b)))
                    .fold((usize::MAX, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
            })
            .collect();
        let mut out = Vec::new();
        let base = src.salient.len();
        for (i, &(j, score)) in best_for_src.iter().enumerate() {
            if j == usize::MAX || score < self.min_ncc {
                continue;
            }
            let back = ps
                .iter()
                .enumerate()
                .map(|(k, a)| (k, ncc(a, &pt[j])))
                .fold((usize::MAX, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            if back.0 != i {
                continue;
            }
            let a = &ps[i];
            out.push(Correspondence::new(
                base + a.y * src.anchor.width() + a.x,
                a.point,
                pt[j].point,
                score,
            ));
        }
        out
    }
}
