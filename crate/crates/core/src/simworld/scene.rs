//! Axis-aligned textured boxes and a first-hit ray caster.

use nalgebra::Vector3;

use crate::camera::{Grid, Intrinsics};
use crate::liegroup::Sim3;
use crate::summary::{Aabb, AnchorKeyframe};
use crate::camera::Image;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Pattern {
    /// Constant albedo.
    Flat,
    /// Two-octave value noise at `frequency` cycles per meter.
    Noise { frequency: f64, amplitude: f64 },
    /// 3D tiling with cell size `cell` meters; each tile takes a hashed
    /// offset in `[-contrast, contrast]` plus fine noise, so the pattern
    /// never repeats.
    Checker { cell: f64, contrast: f64 },
    /// Linear ramp along `axis`.
    Gradient { axis: usize, slope: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Material {
    pub albedo: f64,
    pub pattern: Pattern,
    pub seed: u64,
}

impl Material {
    pub fn flat(albedo: f64) -> Self {
        Self {
            albedo,
            pattern: Pattern::Flat,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneBox {
    pub aabb: Aabb,
    pub material: Material,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SceneModel {
    pub boxes: Vec<SceneBox>,
}

/// First intersection of a ray with the scene.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    /// Ray parameter; equals camera depth when the direction has unit z in
    /// the camera frame.
    pub t: f64,
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub intensity: f64,
}

fn hash3(x: i64, y: i64, z: i64, seed: u64) -> f64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [x, y, z] {
        h ^= v as u64;
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 29;
        h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 32;
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Smoothly interpolated lattice noise in `[0, 1]`.
pub fn value_noise(p: &Vector3<f64>, seed: u64) -> f64 {
    let f = p.map(|c| c.floor());
    let (ix, iy, iz) = (f.x as i64, f.y as i64, f.z as i64);
    let (fx, fy, fz) = (smooth(p.x - f.x), smooth(p.y - f.y), smooth(p.z - f.z));
    let mut acc = 0.0;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let w = if dx == 1 { fx } else { 1.0 - fx }
                    * if dy == 1 { fy } else { 1.0 - fy }
                    * if dz == 1 { fz } else { 1.0 - fz };
                acc += w * hash3(ix + dx, iy + dy, iz + dz, seed);
            }
        }
    }
    acc
}

impl Material {
    pub fn intensity(&self, p: &Vector3<f64>) -> f64 {
        let v = match self.pattern {
            Pattern::Flat => self.albedo,
            Pattern::Noise {
                frequency,
                amplitude,
            } => {
                let n = 0.65 * value_noise(&(p * frequency), self.seed)
                    + 0.35 * value_noise(&(p * (2.7 * frequency)), self.seed.wrapping_add(17));
                self.albedo + amplitude * (2.0 * n - 1.0)
            }
            Pattern::Checker { cell, contrast } => {
                let c = p.map(|v| (v / cell).floor() as i64);
                let fine = value_noise(&(p * (3.0 / cell)), self.seed.wrapping_add(29));
                self.albedo
                    + contrast * (2.0 * hash3(c.x, c.y, c.z, self.seed) - 1.0)
                    + 0.5 * contrast * (2.0 * fine - 1.0)
            }
            Pattern::Gradient { axis, slope } => self.albedo + slope * p[axis],
        };
        v.clamp(0.0, 1.0)
    }
}

impl SceneModel {
    pub fn push(&mut self, min: Vector3<f64>, max: Vector3<f64>, material: Material) {
        self.boxes.push(SceneBox {
            aabb: Aabb::new(min, max),
            material,
        });
    }

    /// Bounding box of all primitives.
    pub fn bounds(&self) -> Aabb {
        let pts: Vec<Vector3<f64>> = self
            .boxes
            .iter()
            .flat_map(|b| [b.aabb.min, b.aabb.max])
            .collect();
        Aabb::from_points(&pts).unwrap_or(Aabb::new(Vector3::zeros(), Vector3::zeros()))
    }

    /// Nearest hit with `t > 1e-9` along `origin + t·dir`.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let mut best: Option<(f64, usize, usize, f64)> = None;
        for (bi, b) in self.boxes.iter().enumerate() {
            let mut t_near = f64::NEG_INFINITY;
            let mut t_far = f64::INFINITY;
            let mut axis = 0;
            let mut sign = 0.0;
            let mut miss = false;
            for i in 0..3 {
                if dir[i] == 0.0 {
                    if origin[i] < b.aabb.min[i] || origin[i] > b.aabb.max[i] {
                        miss = true;
                        break;
                    }
                    continue;
                }
                let inv = 1.0 / dir[i];
                let (mut t0, mut t1) = ((b.aabb.min[i] - origin[i]) * inv, (b.aabb.max[i] - origin[i]) * inv);
                let mut s = -1.0;
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                    s = 1.0;
                }
                if t0 > t_near {
                    t_near = t0;
                    axis = i;
                    sign = s;
                }
                t_far = t_far.min(t1);
            }
            if miss || t_near > t_far || t_near <= 1e-9 {
                continue;
            }
            if best.is_none_or(|(bt, ..)| t_near < bt) {
                best = Some((t_near, bi, axis, sign));
            }
        }
        let (t, bi, axis, sign) = best?;
        let point = origin + dir * t;
        let mut normal = Vector3::zeros();
        normal[axis] = sign;
        Some(Hit {
            t,
            point,
            normal,
            intensity: self.boxes[bi].material.intensity(&point),
        })
    }
}

/// Per-pixel render products in the world frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Render {
    pub intensity: Grid,
    /// Camera-frame depth `z`, 0 on a miss.
    pub depth: Grid,
    pub hits: Vec<Option<Hit>>,
}

/// Casts one ray through every pixel center. `pose` is camera-to-world.
pub fn render(scene: &SceneModel, pose: &Sim3, k: &Intrinsics, width: usize, height: usize) -> Render {
    let origin = *pose.translation();
    let r = pose.rotation_matrix();
    let mut hits = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let dir = r * k.ray(x as f64, y as f64);
            hits.push(scene.intersect(&origin, &dir));
        }
    }
    let intensity = Grid::from_fn(width, height, |x, y| {
        hits[y * width + x].map_or(0.0, |h| h.intensity as f32)
    });
    let depth = Grid::from_fn(width, height, |x, y| {
        hits[y * width + x].map_or(0.0, |h| h.t as f32)
    });
    Render {
        intensity,
        depth,
        hits,
    }
}

/// World-frame anchor keyframe: grayscale image and exact inverse depth.
pub fn render_anchor(
    scene: &SceneModel,
    pose: &Sim3,
    k: &Intrinsics,
    width: usize,
    height: usize,
) -> AnchorKeyframe {
    let r = render(scene, pose, k, width, height);
    let disparity = Grid::from_fn(width, height, |x, y| {
        r.hits[y * width + x].map_or(0.0, |h| (1.0 / h.t) as f32)
    });
    AnchorKeyframe {
        pose: *pose,
        image: Image::gray(r.intensity),
        disparity,
        intrinsics: *k,
    }
}
