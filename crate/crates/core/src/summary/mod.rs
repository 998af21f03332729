//! Compact summaries of frozen submaps.
//!
//! A [`SubmapSummary`] carries a unit-norm global descriptor, up to
//! [`MAX_SALIENT`] salient points with local patch descriptors, a
//! voxel-downsampled registration cloud of at most [`MAX_CLOUD`] points, the
//! submap bounding box, and the anchor keyframe used by photometric edges.
//! All geometry is expressed in the submap-local frame.

mod retrieval;
mod saliency;
pub(crate) mod wire;

pub use retrieval::{retrieve, Catalog, RetrievalHit};
pub use saliency::{
    patch_descriptor, score_saliency, select_salient, voxel_downsample, SaliencyWeights,
    SalientPixel, ScoreMap,
};
pub use wire::{decode_summary, encode_summary, WireError, SUMMARY_MAGIC, SUMMARY_VERSION};

use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{Grid, Image, Intrinsics};
use crate::liegroup::Sim3;

pub const DESCRIPTOR_DIM: usize = 128;
pub const LOCAL_DESCRIPTOR_DIM: usize = 32;
pub const MAX_SALIENT: usize = 512;
pub const MAX_CLOUD: usize = 4096;
pub const CLOUD_VOXEL: f64 = 0.05;

pub type LocalDescriptor = [f32; LOCAL_DESCRIPTOR_DIM];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SummaryError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("descriptor must have {DESCRIPTOR_DIM} entries, got {0}")]
    DescriptorLength(usize),
    #[error("descriptor norm {0} differs from 1 by more than 1e-6")]
    DescriptorNorm(f64),
    #[error("{what} holds {count} entries, limit {limit}")]
    TooMany {
        what: &'static str,
        count: usize,
        limit: usize,
    },
    #[error("bounding box min exceeds max")]
    InvertedAabb,
    #[error("{what} point {index} lies outside the bounding box")]
    OutsideAabb { what: &'static str, index: usize },
    #[error("anchor keyframe: {0}")]
    Anchor(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// `(agent, submap index)`, ordered agent-major.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
pub struct SubmapId {
    pub agent: u32,
    pub index: u32,
}

impl SubmapId {
    pub fn new(agent: u32, index: u32) -> Self {
        Self { agent, index }
    }
}

impl fmt::Display for SubmapId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.agent, self.index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Self { min, max }
    }

    /// Tight box around `points`; `None` when empty.
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut b = Self::new(first, first);
        for p in it {
            b.min = b.min.inf(p);
            b.max = b.max.sup(p);
        }
        Some(b)
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn contains(&self, p: &Vector3<f64>, tol: f64) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] - tol && p[i] <= self.max[i] + tol)
    }

    pub fn is_ordered(&self) -> bool {
        (0..3).all(|i| self.min[i] <= self.max[i])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SalientPoint {
    pub position: Vector3<f64>,
    pub descriptor: LocalDescriptor,
}

/// Anchor keyframe payload. `pose` is camera-to-submap-local with unit scale;
/// `disparity` is inverse depth in local units, 0 where invalid.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorKeyframe {
    pub pose: Sim3,
    pub image: Image,
    pub disparity: Grid,
    pub intrinsics: Intrinsics,
}

impl AnchorKeyframe {
    pub fn width(&self) -> usize {
        self.image.width
    }

    pub fn height(&self) -> usize {
        self.image.height
    }

    /// Submap-local point seen at integer pixel `(x, y)`, if the disparity is valid.
    pub fn backproject(&self, x: usize, y: usize) -> Option<Vector3<f64>> {
        let d = self.disparity.get(x, y) as f64;
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let pc = self.intrinsics.backproject(x as f64, y as f64, 1.0 / d);
        Some(self.pose.act(&pc))
    }

    pub fn validate(&self) -> Result<(), SummaryError> {
        let img = &self.image;
        if img.channels != 1 && img.channels != 3 {
            return Err(SummaryError::Anchor(format!(
                "image must have 1 or 3 channels, got {}",
                img.channels
            )));
        }
        if img.data.len() != img.width * img.height * img.channels {
            return Err(SummaryError::Anchor("image buffer size".into()));
        }
        if img.width != self.disparity.width || img.height != self.disparity.height {
            return Err(SummaryError::Anchor(
                "image and disparity dimensions differ".into(),
            ));
        }
        if self.disparity.data.len() != self.disparity.width * self.disparity.height {
            return Err(SummaryError::Anchor("disparity buffer size".into()));
        }
        if !self
            .disparity
            .data
            .iter()
            .all(|d| d.is_finite() && *d >= 0.0)
        {
            return Err(SummaryError::Anchor(
                "disparity entries must be finite and nonnegative".into(),
            ));
        }
        if !self.intrinsics.is_valid_for(img.width, img.height) {
            return Err(SummaryError::Anchor(format!(
                "invalid intrinsics {:?} for {}x{}",
                self.intrinsics, img.width, img.height
            )));
        }
        if (self.pose.scale() - 1.0).abs() > 1e-9 {
            return Err(SummaryError::Anchor(format!(
                "anchor pose scale must be 1, got {}",
                self.pose.scale()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubmapSummary {
    pub id: SubmapId,
    pub descriptor: Vec<f64>,
    pub salient: Vec<SalientPoint>,
    pub cloud: Vec<Vector3<f64>>,
    pub aabb: Aabb,
    pub anchor: AnchorKeyframe,
}

impl SubmapSummary {
    pub fn validate(&self) -> Result<(), SummaryError> {
        if self.descriptor.len() != DESCRIPTOR_DIM {
            return Err(SummaryError::DescriptorLength(self.descriptor.len()));
        }
        if !self.descriptor.iter().all(|x| x.is_finite()) {
            return Err(SummaryError::NonFinite("descriptor"));
        }
        let n = self.descriptor.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-6 {
            return Err(SummaryError::DescriptorNorm(n));
        }
        if self.salient.len() > MAX_SALIENT {
            return Err(SummaryError::TooMany {
                what: "salient set",
                count: self.salient.len(),
                limit: MAX_SALIENT,
            });
        }
        if self.cloud.len() > MAX_CLOUD {
            return Err(SummaryError::TooMany {
                what: "registration cloud",
                count: self.cloud.len(),
                limit: MAX_CLOUD,
            });
        }
        if !self.aabb.is_ordered() {
            return Err(SummaryError::InvertedAabb);
        }
        for (i, s) in self.salient.iter().enumerate() {
            if !self.aabb.contains(&s.position, 1e-6) {
                return Err(SummaryError::OutsideAabb {
                    what: "salient",
                    index: i,
                });
            }
        }
        for (i, p) in self.cloud.iter().enumerate() {
            if !self.aabb.contains(p, 1e-6) {
                return Err(SummaryError::OutsideAabb {
                    what: "cloud",
                    index: i,
                });
            }
        }
        self.anchor.validate()
    }

    pub fn cosine_similarity(&self, other: &SubmapSummary) -> f64 {
        self.descriptor
            .iter()
            .zip(&other.descriptor)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Rebuilds the box from the salient and cloud points.
    pub fn recompute_aabb(&mut self) {
        let pts = self
            .salient
            .iter()
            .map(|s| &s.position)
            .chain(self.cloud.iter());
        self.aabb = Aabb::from_points(pts).unwrap_or(Aabb::new(Vector3::zeros(), Vector3::zeros()));
    }
}

/// Parameters for [`build_summary`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SummaryParams {
    pub max_salient: usize,
    pub cloud_voxel: f64,
    pub weights: SaliencyWeights,
}

impl Default for SummaryParams {
    fn default() -> Self {
        Self {
            max_salient: MAX_SALIENT,
            cloud_voxel: CLOUD_VOXEL,
            weights: SaliencyWeights::default(),
        }
    }
}

/// Assembles a summary from a frozen submap's anchor keyframe, its local
/// geometry samples, and an externally produced global descriptor.
///
/// Salient points are the top-scoring anchor pixels under [`score_saliency`]
/// with the anchor intensity as the feature map.
pub fn build_summary(
    id: SubmapId,
    anchor: AnchorKeyframe,
    geometry: &[Vector3<f64>],
    descriptor: Vec<f64>,
    params: &SummaryParams,
) -> Result<SubmapSummary, SummaryError> {
    anchor.validate()?;
    let norm = descriptor.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 0.0 || !norm.is_finite() {
        return Err(SummaryError::DescriptorNorm(norm));
    }
    let descriptor: Vec<f64> = descriptor.iter().map(|x| x / norm).collect();

    let score = score_saliency(&anchor.image, &anchor.disparity, &params.weights)?;
    let (w, h) = (anchor.width(), anchor.height());
    let positions: Vec<Option<Vector3<f64>>> = (0..w * h)
        .map(|i| anchor.backproject(i % w, i / w))
        .collect();
    let salient = select_salient(&score, &positions, params.max_salient.min(MAX_SALIENT))
        .into_iter()
        .map(|px| SalientPoint {
            position: px.position,
            descriptor: patch_descriptor(&anchor.image, px.x, px.y),
        })
        .collect();
    let cloud = voxel_downsample(geometry, params.cloud_voxel);

    let mut s = SubmapSummary {
        id,
        descriptor,
        salient,
        cloud,
        aabb: Aabb::new(Vector3::zeros(), Vector3::zeros()),
        anchor,
    };
    s.recompute_aabb();
    s.validate()?;
    Ok(s)
}
