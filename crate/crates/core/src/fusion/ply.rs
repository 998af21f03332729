//! Binary little-endian PLY for Gaussian maps.

use std::io::{self, BufRead, Write};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

use super::GaussianPrimitive;

const PROPERTIES: [(&str, &str); 14] = [
    ("float", "x"),
    ("float", "y"),
    ("float", "z"),
    ("float", "scale_0"),
    ("float", "scale_1"),
    ("float", "scale_2"),
    ("float", "rot_0"),
    ("float", "rot_1"),
    ("float", "rot_2"),
    ("float", "rot_3"),
    ("float", "opacity"),
    ("uchar", "red"),
    ("uchar", "green"),
    ("uchar", "blue"),
];

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("malformed header: {0}")]
    Header(String),
}

fn to_u8(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Rotation stored as `(w, x, y, z)` in `rot_0..rot_3`.
pub fn write_ply<W: Write>(w: &mut W, gaussians: &[GaussianPrimitive]) -> io::Result<()> {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", gaussians.len()));
    for (ty, name) in PROPERTIES {
        header.push_str(&format!("property {ty} {name}\n"));
    }
    header.push_str("end_header\n");
    w.write_all(header.as_bytes())?;
    let mut buf = Vec::with_capacity(gaussians.len() * 47);
    for g in gaussians {
        let q = g.rotation.quaternion();
        let floats = [
            g.mean.x, g.mean.y, g.mean.z, g.scales.x, g.scales.y, g.scales.z, q.w, q.i, q.j, q.k,
            g.opacity,
        ];
        for f in floats {
            buf.extend_from_slice(&(f as f32).to_le_bytes());
        }
        buf.extend(g.color.iter().map(|c| to_u8(*c)));
    }
    w.write_all(&buf)
}

/// Reads files produced by [`write_ply`].
pub fn read_ply<R: BufRead>(r: &mut R) -> Result<Vec<GaussianPrimitive>, PlyError> {
    let mut line = String::new();
    let mut expect = |r: &mut R, want: &str| -> Result<String, PlyError> {
        line.clear();
        r.read_line(&mut line)?;
        let got = line.trim_end().to_string();
        if !got.starts_with(want) {
            return Err(PlyError::Header(format!("expected '{want}', got '{got}'")));
        }
        Ok(got)
    };
    expect(r, "ply")?;
    expect(r, "format binary_little_endian 1.0")?;
    let count: usize = expect(r, "element vertex ")?["element vertex ".len()..]
        .parse()
        .map_err(|e| PlyError::Header(format!("vertex count: {e}")))?;
    for (ty, name) in PROPERTIES {
        expect(r, &format!("property {ty} {name}"))?;
    }
    expect(r, "end_header")?;
    let mut out = Vec::with_capacity(count);
    let mut rec = [0u8; 47];
    for _ in 0..count {
        r.read_exact(&mut rec)?;
        let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap()) as f64;
        out.push(GaussianPrimitive {
            mean: Vector3::new(f(0), f(1), f(2)),
            scales: Vector3::new(f(3), f(4), f(5)),
            rotation: UnitQuaternion::new_normalize(Quaternion::new(f(6), f(7), f(8), f(9))),
            opacity: f(10),
            color: [
                rec[44] as f64 / 255.0,
                rec[45] as f64 / 255.0,
                rec[46] as f64 / 255.0,
            ],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_at_f32_precision() {
        let g = GaussianPrimitive {
            mean: Vector3::new(1.5, -2.25, 3.0),
            scales: Vector3::new(0.01, 0.02, 0.03),
            rotation: UnitQuaternion::from_scaled_axis(Vector3::new(0.1, 0.2, 0.3)),
            opacity: 0.5,
            color: [0.0, 0.5, 1.0],
        };
        let mut bytes = Vec::new();
        write_ply(&mut bytes, &[g.clone(), g.clone()]).unwrap();
        let back = read_ply(&mut io::Cursor::new(bytes)).unwrap();
        assert_eq!(back.len(), 2);
        assert!((back[0].mean - g.mean).norm() < 1e-6);
        assert!(back[0].rotation.angle_to(&g.rotation) < 1e-6);
        assert_eq!(back[0].color[2], 1.0);
    }
}
