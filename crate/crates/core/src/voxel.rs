//! 64-bit spatial-hash keys for voxel indices.
//!
//! Each signed voxel index (floor division by the voxel size) must lie in
//! `[-2^20, 2^20)`. It is zigzag-encoded to 21 bits and the three axes are
//! packed at bit offsets 0 (x), 21 (y) and 42 (z); bit 63 is always zero.

use nalgebra::Vector3;
use thiserror::Error;

pub const INDEX_BITS: u32 = 21;
pub const INDEX_LIMIT: i64 = 1 << 20;
const FIELD_MASK: u64 = (1 << INDEX_BITS) - 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoxelError {
    #[error("voxel index {index} on axis {axis} outside [-2^20, 2^20)")]
    OutOfRange { axis: usize, index: i64 },
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("key has reserved bit 63 set")]
    ReservedBit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelIndex {
    pub x: i64,
    pub y: i64,
    pub z: i64,
}

impl VoxelIndex {
    pub fn new(x: i64, y: i64, z: i64) -> Self {
        Self { x, y, z }
    }

    pub fn of_point(p: &Vector3<f64>, voxel: f64) -> Result<Self, VoxelError> {
        if !p.iter().all(|c| c.is_finite()) {
            return Err(VoxelError::NonFinite);
        }
        let f = |c: f64| (c / voxel).floor();
        let (x, y, z) = (f(p.x), f(p.y), f(p.z));
        let lim = INDEX_LIMIT as f64;
        for (axis, v) in [x, y, z].into_iter().enumerate() {
            if v < -lim || v >= lim {
                return Err(VoxelError::OutOfRange {
                    axis,
                    index: v.clamp(i64::MIN as f64, i64::MAX as f64) as i64,
                });
            }
        }
        Ok(Self::new(x as i64, y as i64, z as i64))
    }

    pub fn key(&self) -> Result<u64, VoxelError> {
        let mut key = 0u64;
        for (axis, v) in [self.x, self.y, self.z].into_iter().enumerate() {
            if !(-INDEX_LIMIT..INDEX_LIMIT).contains(&v) {
                return Err(VoxelError::OutOfRange { axis, index: v });
            }
            key |= zigzag(v) << (axis as u32 * INDEX_BITS);
        }
        Ok(key)
    }

    pub fn from_key(key: u64) -> Result<Self, VoxelError> {
        if key >> 63 != 0 {
            return Err(VoxelError::ReservedBit);
        }
        let field = |axis: u32| unzigzag((key >> (axis * INDEX_BITS)) & FIELD_MASK);
        Ok(Self::new(field(0), field(1), field(2)))
    }

    /// Minimum corner of the voxel in world units.
    pub fn min_corner(&self, voxel: f64) -> Vector3<f64> {
        Vector3::new(self.x as f64, self.y as f64, self.z as f64) * voxel
    }
}

/// Key of the voxel containing `p`.
pub fn voxel_key(p: &Vector3<f64>, voxel: f64) -> Result<u64, VoxelError> {
    VoxelIndex::of_point(p, voxel)?.key()
}

#[inline]
fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

#[inline]
fn unzigzag(u: u64) -> i64 {
    ((u >> 1) as i64) ^ -((u & 1) as i64)
}
