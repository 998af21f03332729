//! Binary summary encoding.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "MAGS" u16 version
//! section header     : u32 agent, u32 index
//! section descriptor : u32 n, n f64
//! section salient    : u32 n, n x (3 f64 position, 32 f32 descriptor)
//! section cloud      : u32 n, n x 3 f64
//! section aabb       : 3 f64 min, 3 f64 max
//! section anchor     : 8 f64 pose, 4 f64 intrinsics, u32 width, u32 height,
//!                      u32 channels, f32 image (row-major, interleaved), f32 disparity
//! ```
//!
//! Every section is preceded by its byte length as a u32.

use nalgebra::Vector3;
use thiserror::Error;

use super::{
    Aabb, AnchorKeyframe, SalientPoint, SubmapId, SubmapSummary, SummaryError,
    LOCAL_DESCRIPTOR_DIM,
};
use crate::camera::{Grid, Image, Intrinsics};
use crate::liegroup::Sim3;

pub const SUMMARY_MAGIC: &[u8; 4] = b"MAGS";
pub const SUMMARY_VERSION: u16 = 1;

const SECTIONS: [&str; 6] = ["header", "descriptor", "salient", "cloud", "aabb", "anchor"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("bad magic {found:?} at offset 0")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported version {0} at offset 4")]
    UnsupportedVersion(u16),
    #[error("truncated at offset {offset}: need {needed} bytes, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("section {section} at offset {offset} declares {declared} bytes but holds {actual}")]
    SectionLength {
        section: &'static str,
        offset: usize,
        declared: usize,
        actual: usize,
    },
    #[error("{0} trailing bytes after the last section")]
    TrailingBytes(usize),
    #[error("invalid field at offset {offset}: {message}")]
    InvalidField { offset: usize, message: String },
    #[error("decoded summary violates an invariant: {0}")]
    Invariant(#[from] SummaryError),
}

pub(crate) struct Writer {
    pub(crate) buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn new() -> Self {
        Self { buf: Vec::new() }
    }
    pub(crate) fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub(crate) fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub(crate) fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub(crate) fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub(crate) fn vec3(&mut self, v: &Vector3<f64>) {
        v.iter().for_each(|x| self.f64(*x));
    }
    pub(crate) fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("length exceeds u32"));
    }

    /// Writes a length-prefixed section produced by `body`.
    pub(crate) fn section(&mut self, body: impl FnOnce(&mut Writer)) {
        let at = self.buf.len();
        self.u32(0);
        body(self);
        let n = (self.buf.len() - at - 4) as u32;
        self.buf[at..at + 4].copy_from_slice(&n.to_le_bytes());
    }
}

pub fn encode_summary(s: &SubmapSummary) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(SUMMARY_MAGIC);
    w.u16(SUMMARY_VERSION);
    w.section(|w| {
        w.u32(s.id.agent);
        w.u32(s.id.index);
    });
    w.section(|w| {
        w.len(s.descriptor.len());
        s.descriptor.iter().for_each(|x| w.f64(*x));
    });
    w.section(|w| {
        w.len(s.salient.len());
        for q in &s.salient {
            w.vec3(&q.position);
            q.descriptor.iter().for_each(|x| w.f32(*x));
        }
    });
    w.section(|w| {
        w.len(s.cloud.len());
        s.cloud.iter().for_each(|p| w.vec3(p));
    });
    w.section(|w| {
        w.vec3(&s.aabb.min);
        w.vec3(&s.aabb.max);
    });
    w.section(|w| {
        let a = &s.anchor;
        a.pose.to_array().iter().for_each(|x| w.f64(*x));
        let k = &a.intrinsics;
        [k.fx, k.fy, k.cx, k.cy].iter().for_each(|x| w.f64(*x));
        w.len(a.image.width);
        w.len(a.image.height);
        w.len(a.image.channels);
        a.image.data.iter().for_each(|x| w.f32(*x));
        a.disparity.data.iter().for_each(|x| w.f32(*x));
    });
    w.buf
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pub(crate) pos: usize,
    end: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self {
            buf,
            pos: 0,
            end: buf.len(),
        }
    }
    pub(crate) fn remaining(&self) -> usize {
        self.end - self.pos
    }
    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let available = self.end - self.pos;
        if n > available {
            return Err(WireError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    pub(crate) fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    pub(crate) fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub(crate) fn f32(&mut self) -> Result<f32, WireError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub(crate) fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub(crate) fn vec3(&mut self) -> Result<Vector3<f64>, WireError> {
        Ok(Vector3::new(self.f64()?, self.f64()?, self.f64()?))
    }
    /// Element count whose payload of `elem` bytes each must fit.
    pub(crate) fn count(&mut self, elem: usize) -> Result<usize, WireError> {
        let at = self.pos;
        let n = self.u32()? as usize;
        let needed = n.checked_mul(elem).ok_or(WireError::InvalidField {
            offset: at,
            message: format!("count {n} overflows"),
        })?;
        if needed > self.end - self.pos {
            return Err(WireError::Truncated {
                offset: self.pos,
                needed,
                available: self.end - self.pos,
            });
        }
        Ok(n)
    }

    pub(crate) fn section<T>(
        &mut self,
        name: &'static str,
        body: impl FnOnce(&mut Reader<'a>) -> Result<T, WireError>,
    ) -> Result<T, WireError> {
        let at = self.pos;
        let declared = self.u32()? as usize;
        if declared > self.end - self.pos {
            return Err(WireError::Truncated {
                offset: self.pos,
                needed: declared,
                available: self.end - self.pos,
            });
        }
        let mut inner = Reader {
            buf: self.buf,
            pos: self.pos,
            end: self.pos + declared,
        };
        let v = body(&mut inner)?;
        let actual = inner.pos - self.pos;
        if actual != declared {
            return Err(WireError::SectionLength {
                section: name,
                offset: at,
                declared,
                actual,
            });
        }
        self.pos = inner.end;
        Ok(v)
    }
}

pub fn decode_summary(bytes: &[u8]) -> Result<SubmapSummary, WireError> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4).map_err(|_| WireError::BadMagic {
        found: bytes.to_vec(),
    })?;
    if magic != SUMMARY_MAGIC {
        return Err(WireError::BadMagic {
            found: magic.to_vec(),
        });
    }
    let version = r.u16()?;
    if version != SUMMARY_VERSION {
        return Err(WireError::UnsupportedVersion(version));
    }
    let id = r.section(SECTIONS[0], |r| Ok(SubmapId::new(r.u32()?, r.u32()?)))?;
    let descriptor = r.section(SECTIONS[1], |r| {
        let n = r.count(8)?;
        (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()
    })?;
    let salient = r.section(SECTIONS[2], |r| {
        let n = r.count(24 + 4 * LOCAL_DESCRIPTOR_DIM)?;
        (0..n)
            .map(|_| {
                let position = r.vec3()?;
                let mut descriptor = [0f32; LOCAL_DESCRIPTOR_DIM];
                for d in descriptor.iter_mut() {
                    *d = r.f32()?;
                }
                Ok(SalientPoint {
                    position,
                    descriptor,
                })
            })
            .collect::<Result<Vec<_>, WireError>>()
    })?;
    let cloud = r.section(SECTIONS[3], |r| {
        let n = r.count(24)?;
        (0..n).map(|_| r.vec3()).collect::<Result<Vec<_>, _>>()
    })?;
    let aabb = r.section(SECTIONS[4], |r| Ok(Aabb::new(r.vec3()?, r.vec3()?)))?;
    let anchor = r.section(SECTIONS[5], |r| {
        let at = r.pos;
        let mut pose = [0f64; 8];
        for p in pose.iter_mut() {
            *p = r.f64()?;
        }
        let pose = Sim3::from_array(&pose).map_err(|e| WireError::InvalidField {
            offset: at,
            message: format!("anchor pose: {e}"),
        })?;
        let intrinsics = Intrinsics::new(r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let dims_at = r.pos;
        let width = r.u32()? as usize;
        let height = r.u32()? as usize;
        let channels = r.u32()? as usize;
        let pixels = width.checked_mul(height).ok_or(WireError::InvalidField {
            offset: dims_at,
            message: "image size overflows".into(),
        })?;
        let floats = pixels
            .checked_mul(channels + 1)
            .and_then(|f| f.checked_mul(4))
            .ok_or(WireError::InvalidField {
                offset: dims_at,
                message: "image size overflows".into(),
            })?;
        if floats > r.end - r.pos {
            return Err(WireError::Truncated {
                offset: r.pos,
                needed: floats,
                available: r.end - r.pos,
            });
        }
        let data = (0..pixels * channels)
            .map(|_| r.f32())
            .collect::<Result<Vec<_>, _>>()?;
        let disp = (0..pixels).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
        Ok(AnchorKeyframe {
            pose,
            image: Image {
                width,
                height,
                channels,
                data,
            },
            disparity: Grid {
                width,
                height,
                data: disp,
            },
            intrinsics,
        })
    })?;
    if r.pos != bytes.len() {
        return Err(WireError::TrailingBytes(bytes.len() - r.pos));
    }
    let s = SubmapSummary {
        id,
        descriptor,
        salient,
        cloud,
        aabb,
        anchor,
    };
    s.validate()?;
    Ok(s)
}
