//! Agent messages and the framed stream format.
//!
//! ```text
//! stream : "MAGSSTRM" u16 version, u32 n, n bytes header JSON, frame*
//! frame  : u8 kind, u32 agent, u64 seq, u64 n, n bytes payload
//! ```
//!
//! Payloads are little-endian. Summaries use the summary wire format; PGBA
//! reports and map data use the layouts below.
//!
//! ```text
//! pgba     : u32 agent, u32 index, u32 n, n x 3 f64 pre, n x 3 f64 post
//! map data : u32 agent, u32 index,
//!            u32 n, n x (3 f64 mean, 3 f64 scales, 4 f64 wxyz, f64 opacity, 3 f64 color),
//!            u32 m, m x keyframe
//! keyframe : f64 timestamp, 8 f64 pose, 4 f64 intrinsics, grid disparity,
//!            u8 flag [grid captured], u8 flag [grid reference]
//! grid     : u32 width, u32 height, width*height f32
//! ```

use std::collections::BTreeMap;

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{Grid, Intrinsics};
use crate::fusion::{FusionKeyframe, GaussianPrimitive, SubmapMap};
use crate::liegroup::Sim3;
use crate::simworld::{PgbaMessage, SimEvent};
use crate::summary::wire::{Reader, Writer};
use crate::summary::{decode_summary, encode_summary, SubmapId, SubmapSummary, WireError};

pub const STREAM_MAGIC: &[u8; 8] = b"MAGSSTRM";
pub const STREAM_VERSION: u16 = 1;
const FRAME_HEADER: usize = 1 + 4 + 8 + 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Summary = 1,
    PgbaReport = 2,
    MapData = 3,
}

impl MessageKind {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(Self::Summary),
            2 => Some(Self::PgbaReport),
            3 => Some(Self::MapData),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub kind: MessageKind,
    pub agent: u32,
    pub seq: u64,
    pub payload: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Summary(SubmapSummary),
    Pgba(PgbaMessage),
    MapData(SubmapMap),
}

impl Payload {
    pub fn id(&self) -> SubmapId {
        match self {
            Self::Summary(s) => s.id,
            Self::Pgba(p) => p.id,
            Self::MapData(m) => m.id,
        }
    }
}

impl Message {
    pub fn from_event(event: &SimEvent, seq: u64) -> Self {
        let (kind, payload) = match event {
            SimEvent::Summary(s) => (MessageKind::Summary, encode_summary(s)),
            SimEvent::Pgba(p) => (MessageKind::PgbaReport, encode_pgba(p)),
            SimEvent::MapData(m) => (MessageKind::MapData, encode_map(m)),
        };
        Self {
            kind,
            agent: event.agent(),
            seq,
            payload,
        }
    }

    pub fn decode(&self) -> Result<Payload, WireError> {
        Ok(match self.kind {
            MessageKind::Summary => Payload::Summary(decode_summary(&self.payload)?),
            MessageKind::PgbaReport => Payload::Pgba(decode_pgba(&self.payload)?),
            MessageKind::MapData => Payload::MapData(decode_map(&self.payload)?),
        })
    }
}

/// Messages for `events` with per-agent sequence numbers starting at 0.
pub fn messages_from_events(events: &[SimEvent]) -> Vec<Message> {
    let mut next: BTreeMap<u32, u64> = BTreeMap::new();
    events
        .iter()
        .map(|e| {
            let seq = next.entry(e.agent()).or_insert(0);
            let m = Message::from_event(e, *seq);
            *seq += 1;
            m
        })
        .collect()
}

pub fn encode_pgba(p: &PgbaMessage) -> Vec<u8> {
    let mut w = Writer::new();
    w.u32(p.id.agent);
    w.u32(p.id.index);
    w.len(p.pre.len());
    p.pre.iter().for_each(|v| w.vec3(v));
    p.post.iter().for_each(|v| w.vec3(v));
    w.buf
}

fn finish(r: &Reader) -> Result<(), WireError> {
    match r.remaining() {
        0 => Ok(()),
        n => Err(WireError::TrailingBytes(n)),
    }
}

pub fn decode_pgba(bytes: &[u8]) -> Result<PgbaMessage, WireError> {
    let mut r = Reader::new(bytes);
    let id = SubmapId::new(r.u32()?, r.u32()?);
    let n = r.count(48)?;
    let pre = (0..n).map(|_| r.vec3()).collect::<Result<Vec<_>, _>>()?;
    let post = (0..n).map(|_| r.vec3()).collect::<Result<Vec<_>, _>>()?;
    finish(&r)?;
    Ok(PgbaMessage { id, pre, post })
}

fn write_grid(w: &mut Writer, g: &Grid) {
    w.len(g.width);
    w.len(g.height);
    g.data.iter().for_each(|v| w.f32(*v));
}

fn read_grid(r: &mut Reader) -> Result<Grid, WireError> {
    let at = r.pos;
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    let n = width
        .checked_mul(height)
        .filter(|n| n.checked_mul(4).is_some_and(|b| b <= r.remaining()))
        .ok_or(WireError::InvalidField {
            offset: at,
            message: format!("grid {width}x{height} exceeds payload"),
        })?;
    let data = (0..n).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
    Ok(Grid {
        width,
        height,
        data,
    })
}

fn write_optional_grid(w: &mut Writer, g: &Option<Grid>) {
    match g {
        Some(g) => {
            w.buf.push(1);
            write_grid(w, g);
        }
        None => w.buf.push(0),
    }
}

fn read_optional_grid(r: &mut Reader) -> Result<Option<Grid>, WireError> {
    let at = r.pos;
    match r.take(1)?[0] {
        0 => Ok(None),
        1 => read_grid(r).map(Some),
        f => Err(WireError::InvalidField {
            offset: at,
            message: format!("grid flag {f}"),
        }),
    }
}

fn read_sim3(r: &mut Reader) -> Result<Sim3, WireError> {
    let at = r.pos;
    let mut a = [0f64; 8];
    for v in a.iter_mut() {
        *v = r.f64()?;
    }
    Sim3::from_array(&a).map_err(|e| WireError::InvalidField {
        offset: at,
        message: e.to_string(),
    })
}

pub fn encode_map(m: &SubmapMap) -> Vec<u8> {
    let mut w = Writer::new();
    w.u32(m.id.agent);
    w.u32(m.id.index);
    w.len(m.gaussians.len());
    for g in &m.gaussians {
        w.vec3(&g.mean);
        w.vec3(&g.scales);
        let q = g.rotation.quaternion();
        [q.w, q.i, q.j, q.k].iter().for_each(|v| w.f64(*v));
        w.f64(g.opacity);
        g.color.iter().for_each(|v| w.f64(*v));
    }
    w.len(m.keyframes.len());
    for k in &m.keyframes {
        w.f64(k.timestamp);
        k.pose.to_array().iter().for_each(|v| w.f64(*v));
        let i = &k.intrinsics;
        [i.fx, i.fy, i.cx, i.cy].iter().for_each(|v| w.f64(*v));
        write_grid(&mut w, &k.disparity);
        write_optional_grid(&mut w, &k.captured);
        write_optional_grid(&mut w, &k.reference);
    }
    w.buf
}

pub fn decode_map(bytes: &[u8]) -> Result<SubmapMap, WireError> {
    let mut r = Reader::new(bytes);
    let id = SubmapId::new(r.u32()?, r.u32()?);
    let n = r.count(14 * 8)?;
    let mut gaussians = Vec::with_capacity(n);
    for _ in 0..n {
        let at = r.pos;
        let mean = r.vec3()?;
        let scales = r.vec3()?;
        let (qw, qx, qy, qz) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let q = Quaternion::new(qw, qx, qy, qz);
        if !(q.norm() > 0.0) {
            return Err(WireError::InvalidField {
                offset: at,
                message: "zero rotation quaternion".into(),
            });
        }
        let opacity = r.f64()?;
        let color = [r.f64()?, r.f64()?, r.f64()?];
        gaussians.push(GaussianPrimitive {
            mean,
            scales,
            rotation: UnitQuaternion::new_unchecked(q),
            opacity,
            color,
        });
    }
    let m = r.count(13 * 8 + 8 + 2)?;
    let mut keyframes = Vec::with_capacity(m);
    for _ in 0..m {
        let timestamp = r.f64()?;
        let pose = read_sim3(&mut r)?;
        let intrinsics = Intrinsics::new(r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let disparity = read_grid(&mut r)?;
        let captured = read_optional_grid(&mut r)?;
        let reference = read_optional_grid(&mut r)?;
        keyframes.push(FusionKeyframe {
            timestamp,
            pose,
            disparity,
            intrinsics,
            captured,
            reference,
        });
    }
    finish(&r)?;
    Ok(SubmapMap {
        id,
        gaussians,
        keyframes,
    })
}

/// Run settings carried at the head of a stream so replays are
/// self-contained.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamHeader {
    /// Scenario text the stream was generated from, if any.
    pub scenario: Option<String>,
    pub overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StreamError {
    #[error("bad stream magic at offset 0")]
    BadMagic,
    #[error("unsupported stream version {0} at offset 8")]
    UnsupportedVersion(u16),
    #[error("truncated at offset {offset}: need {needed} bytes, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("invalid stream header at offset {offset}: {message}")]
    Header { offset: usize, message: String },
    #[error("unknown message kind {kind} at offset {offset}")]
    UnknownKind { offset: usize, kind: u8 },
}

pub fn write_stream(header: &StreamHeader, messages: &[Message]) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(
        STREAM_MAGIC.len() + 6 + json.len() + messages.iter().map(|m| FRAME_HEADER + m.payload.len()).sum::<usize>(),
    );
    out.extend_from_slice(STREAM_MAGIC);
    out.extend_from_slice(&STREAM_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for m in messages {
        out.push(m.kind as u8);
        out.extend_from_slice(&m.agent.to_le_bytes());
        out.extend_from_slice(&m.seq.to_le_bytes());
        out.extend_from_slice(&(m.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&m.payload);
    }
    out
}

/// Incremental frame reader. After a framing error (truncation) iteration
/// stops; an unknown kind skips only that frame.
pub struct StreamReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    failed: bool,
}

impl<'a> StreamReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<(StreamHeader, Self), StreamError> {
        if bytes.len() < STREAM_MAGIC.len() || &bytes[..8] != STREAM_MAGIC {
            return Err(StreamError::BadMagic);
        }
        let need = |offset: usize, needed: usize| {
            if bytes.len() < offset + needed {
                Err(StreamError::Truncated {
                    offset,
                    needed,
                    available: bytes.len().saturating_sub(offset),
                })
            } else {
                Ok(())
            }
        };
        need(8, 6)?;
        let version = u16::from_le_bytes([bytes[8], bytes[9]]);
        if version != STREAM_VERSION {
            return Err(StreamError::UnsupportedVersion(version));
        }
        let n = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        need(14, n)?;
        let header: StreamHeader =
            serde_json::from_slice(&bytes[14..14 + n]).map_err(|e| StreamError::Header {
                offset: 14,
                message: e.to_string(),
            })?;
        Ok((
            header,
            Self {
                bytes,
                pos: 14 + n,
                failed: false,
            },
        ))
    }
}

impl Iterator for StreamReader<'_> {
    /// Frame byte offset and the message or the framing error there.
    type Item = (usize, Result<Message, StreamError>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.pos >= self.bytes.len() {
            return None;
        }
        let at = self.pos;
        let rest = &self.bytes[at..];
        if rest.len() < FRAME_HEADER {
            self.failed = true;
            return Some((
                at,
                Err(StreamError::Truncated {
                    offset: at,
                    needed: FRAME_HEADER,
                    available: rest.len(),
                }),
            ));
        }
        let kind = rest[0];
        let agent = u32::from_le_bytes(rest[1..5].try_into().unwrap());
        let seq = u64::from_le_bytes(rest[5..13].try_into().unwrap());
        let len = u64::from_le_bytes(rest[13..21].try_into().unwrap());
        let available = rest.len() - FRAME_HEADER;
        if len > available as u64 {
            self.failed = true;
            return Some((
                at,
                Err(StreamError::Truncated {
                    offset: at + FRAME_HEADER,
                    needed: usize::try_from(len).unwrap_or(usize::MAX),
                    available,
                }),
            ));
        }
        let len = len as usize;
        self.pos = at + FRAME_HEADER + len;
        let Some(kind) = MessageKind::from_u8(kind) else {
            return Some((at, Err(StreamError::UnknownKind { offset: at, kind })));
        };
        Some((
            at,
            Ok(Message {
                kind,
                agent,
                seq,
                payload: rest[FRAME_HEADER..FRAME_HEADER + len].to_vec(),
            }),
        ))
    }
}
