//! Scene layouts and camera paths for each overlap plan.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use super::config::{OverlapPlan, ScenarioConfig};
use super::scene::{Material, Pattern, SceneModel};
use crate::liegroup::Sim3;

/// Seconds between consecutive keyframes.
pub const KEYFRAME_PERIOD: f64 = 0.5;
/// Arc length between consecutive ring keyframes, meters.
pub const RING_SPACING: f64 = 0.15;
/// Offset between the two rooms along x.
pub const ROOM_B_OFFSET: f64 = 10.6;

const ROOM_HALF: (f64, f64) = (5.0, 4.0);
const ROOM_HEIGHT: f64 = 3.0;
const WALL: f64 = 0.2;
/// Shift of room geometry that keeps axis-aligned faces off voxel boundaries.
const FACE_OFFSET: f64 = 0.025;

/// Camera-to-world pose at `eye` looking at `target` (z forward, y down,
/// world up is +z).
pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>) -> Sim3 {
    let f = (target - eye).normalize();
    let r = f.cross(&Vector3::z()).normalize();
    let d = f.cross(&r);
    let m = Matrix3::from_columns(&[r, d, f]);
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
    Sim3::new(1.0, q, eye)
}

fn noise(albedo: f64, frequency: f64, amplitude: f64, seed: u64) -> Material {
    Material {
        albedo,
        pattern: Pattern::Noise {
            frequency,
            amplitude,
        },
        seed,
    }
}

/// One closed textured room centered at `(ox, 0)` with furniture.
pub fn add_room(scene: &mut SceneModel, ox: f64, seed: u64) {
    let (hx, hy, h) = (ROOM_HALF.0, ROOM_HALF.1, ROOM_HEIGHT);
    let v = |x: f64, y: f64, z: f64| Vector3::new(ox + x, y, z).add_scalar(FACE_OFFSET);
    let s = seed * 100;
    scene.push(v(-hx - WALL, -hy - WALL, -WALL), v(hx + WALL, hy + WALL, 0.0), noise(0.45, 3.0, 0.3, s + 1));
    scene.push(v(-hx - WALL, -hy - WALL, h), v(hx + WALL, hy + WALL, h + WALL), noise(0.7, 2.0, 0.2, s + 2));
    scene.push(v(-hx, hy, 0.0), v(hx, hy + WALL, h), noise(0.5, 6.0, 0.38, s + 3));
    scene.push(v(-hx, -hy - WALL, 0.0), v(hx, -hy, h), noise(0.5, 6.0, 0.38, s + 4));
    scene.push(v(hx, -hy - WALL, 0.0), v(hx + WALL, hy + WALL, h), noise(0.5, 6.0, 0.38, s + 5));
    scene.push(v(-hx - WALL, -hy - WALL, 0.0), v(-hx, hy + WALL, h), noise(0.5, 6.0, 0.38, s + 6));
    let checker = Material {
        albedo: 0.5,
        pattern: Pattern::Checker {
            cell: 0.12,
            contrast: 0.35,
        },
        seed: s + 7,
    };
    let gradient = Material {
        albedo: 0.3,
        pattern: Pattern::Gradient {
            axis: 2,
            slope: 0.25,
        },
        seed: s + 8,
    };
    scene.push(v(-3.2, 3.4, 0.0), v(-2.0, hy, 1.8), checker);
    scene.push(v(1.0, 3.1, 0.0), v(2.6, hy, 0.8), noise(0.4, 8.0, 0.35, s + 9));
    scene.push(v(4.3, -1.2, 0.0), v(hx, 0.4, 1.2), noise(0.55, 7.0, 0.35, s + 10));
    scene.push(v(-1.2, -hy, 0.0), v(0.4, -3.3, 1.0), checker);
    scene.push(v(-hx, 0.8, 0.0), v(-4.4, 2.2, 2.0), gradient);
    scene.push(v(2.2, -hy, 0.0), v(3.4, -3.5, 1.5), noise(0.35, 9.0, 0.3, s + 11));
    scene.push(v(-4.3, -3.2, 0.0), v(-3.5, -2.4, 0.9), noise(0.6, 8.0, 0.3, s + 12));
}

/// Featureless corridor with one small textured strip on its north wall.
pub fn corridor_scene() -> SceneModel {
    let mut s = SceneModel::default();
    let flat = Material::flat(0.5);
    let (hx, hy, h) = (8.0, 1.2, 2.6);
    s.push(Vector3::new(-hx, -hy, -WALL), Vector3::new(hx, hy, 0.0), flat);
    s.push(Vector3::new(-hx, -hy, h), Vector3::new(hx, hy, h + WALL), flat);
    s.push(Vector3::new(-hx, hy, 0.0), Vector3::new(hx, hy + WALL, h), flat);
    s.push(Vector3::new(-hx, -hy - WALL, 0.0), Vector3::new(hx, -hy, h), flat);
    s.push(Vector3::new(hx, -hy, 0.0), Vector3::new(hx + WALL, hy, h), flat);
    s.push(Vector3::new(-hx - WALL, -hy, 0.0), Vector3::new(-hx, hy, h), flat);
    s.push(
        Vector3::new(-0.2, hy - 0.02, 1.30),
        Vector3::new(0.2, hy, 1.42),
        noise(0.5, 25.0, 0.45, 77),
    );
    s
}

pub fn build_scene(config: &ScenarioConfig) -> SceneModel {
    let mut scene = SceneModel::default();
    match config.plan {
        OverlapPlan::Ring | OverlapPlan::Full => add_room(&mut scene, 0.0, config.seed),
        OverlapPlan::Disjoint | OverlapPlan::Pair => {
            add_room(&mut scene, 0.0, config.seed);
            add_room(&mut scene, ROOM_B_OFFSET, config.seed + 1);
        }
        OverlapPlan::Corridor => return corridor_scene(),
    }
    scene
}

fn forward(yaw: f64, pitch: f64) -> Vector3<f64> {
    Vector3::new(pitch.cos() * yaw.cos(), pitch.cos() * yaw.sin(), pitch.sin())
}

/// Outward-looking loop around a room center; keyframes every
/// [`RING_SPACING`] meters of arc starting at `phase`.
fn ring(count: usize, ox: f64, phase: f64, radius: f64, height: f64) -> Vec<Sim3> {
    let (rx, ry) = (2.6 * radius, 1.8 * radius);
    let mut out = Vec::with_capacity(count);
    let mut phi = phase;
    for _ in 0..count {
        let eye = Vector3::new(ox + rx * phi.cos(), ry * phi.sin(), height + 0.06 * (3.0 * phi).sin());
        let normal = Vector3::new(phi.cos() / rx, phi.sin() / ry, 0.0);
        let yaw = normal.y.atan2(normal.x) + 0.15;
        out.push(look_at(eye, eye + forward(yaw, -0.15)));
        let speed = (rx * rx * phi.sin().powi(2) + ry * ry * phi.cos().powi(2)).sqrt();
        phi += RING_SPACING / speed;
    }
    out
}

/// Sideways sweep in front of a wall point, always looking at it.
fn sweep(count: usize, eye0: Vector3<f64>, span: f64, target: Vector3<f64>, phase: f64) -> Vec<Sim3> {
    (0..count)
        .map(|k| {
            let u = (TAU * k as f64 / 32.0 + phase).sin();
            let eye = eye0 + Vector3::new(0.5 * span * u, 0.05 * (k as f64 * 0.7).cos(), 0.04 * u);
            look_at(eye, target + Vector3::new(0.3 * u, 0.0, 0.0))
        })
        .collect()
}

/// Linear pass between two eye positions, looking at a fixed target.
fn pass(count: usize, from: Vector3<f64>, to: Vector3<f64>, target: Vector3<f64>) -> Vec<Sim3> {
    (0..count)
        .map(|k| {
            let t = k as f64 / (count.max(2) - 1) as f64;
            let eye = from + (to - from) * t + Vector3::new(0.0, 0.0, 0.03 * (k as f64 * 1.3).sin());
            look_at(eye, target + Vector3::new((to - from).x * (t - 0.5) * 0.5, 0.0, 0.0))
        })
        .collect()
}

/// World camera poses for every agent.
pub fn plan_trajectories(config: &ScenarioConfig) -> Vec<Vec<Sim3>> {
    let n = config.n_agents;
    let count = config.submaps_per_agent * config.k_max;
    let k = config.k_max;
    match config.plan {
        OverlapPlan::Ring => (0..n)
            .map(|a| {
                let phase = TAU * a as f64 / n as f64 + 0.05 * a as f64;
                let radius = 1.0 + 0.03 * (a as f64 - (n as f64 - 1.0) / 2.0);
                ring(count, 0.0, phase, radius, 1.4 + 0.08 * a as f64)
            })
            .collect(),
        OverlapPlan::Full => (0..n)
            .map(|a| {
                let eye = Vector3::new(0.0, 0.4 + 0.15 * a as f64, 1.35 + 0.05 * a as f64);
                sweep(count, eye, 2.4, Vector3::new(0.0, ROOM_HALF.1, 1.2), a as f64)
            })
            .collect(),
        OverlapPlan::Disjoint => (0..n)
            .map(|a| ring(count, a as f64 * ROOM_B_OFFSET, 0.3, 1.0, 1.4))
            .collect(),
        OverlapPlan::Pair => {
            let north = Vector3::new(0.0, ROOM_HALF.1, 1.3);
            let south = Vector3::new(0.0, -ROOM_HALF.1, 1.3);
            let mut a0 = pass(k, Vector3::new(-0.6, 0.8, 1.4), Vector3::new(0.6, 0.8, 1.4), north);
            a0.extend(pass(k, Vector3::new(0.6, -0.8, 1.4), Vector3::new(-0.6, -0.8, 1.4), south));
            let b = Vector3::new(ROOM_B_OFFSET, 0.0, 0.0);
            let mut a1 = pass(k, b + Vector3::new(-0.6, 0.8, 1.4), b + Vector3::new(0.6, 0.8, 1.4), b + north);
            a1.extend(pass(k, Vector3::new(-0.4, 0.6, 1.5), Vector3::new(0.8, 0.6, 1.5), north));
            vec![a0, a1]
        }
        OverlapPlan::Corridor => {
            let strip = Vector3::new(0.0, 1.2, 1.36);
            vec![
                pass(k, Vector3::new(-1.2, -0.6, 1.30), Vector3::new(0.6, -0.6, 1.30), strip),
                pass(k, Vector3::new(-0.6, -0.5, 1.38), Vector3::new(1.2, -0.5, 1.38), strip),
            ]
        }
    }
}

/// Timestamp of keyframe `k`.
pub fn timestamp(k: usize) -> f64 {
    k as f64 * KEYFRAME_PERIOD
}
