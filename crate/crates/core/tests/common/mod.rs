//! Seeded generators shared by the integration tests.
#![allow(dead_code)]

use mags_core::camera::{Grid, Image, Intrinsics};
use mags_core::liegroup::{Sim3, Sim3Tangent};
use mags_core::summary::{
    Aabb, AnchorKeyframe, SalientPoint, SubmapId, SubmapSummary, DESCRIPTOR_DIM,
    LOCAL_DESCRIPTOR_DIM,
};
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian3<R: Rng>(rng: &mut R) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.sample(StandardNormal))
}

pub fn uniform3<R: Rng>(rng: &mut R, half: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-half..half))
}

pub fn unit3<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = gaussian3(rng);
        if v.norm() > 1e-3 {
            return v.normalize();
        }
    }
}

/// Tangent with rotation angle below `max_angle`.
pub fn tangent<R: Rng>(rng: &mut R, max_angle: f64) -> Sim3Tangent {
    Sim3Tangent::new(
        uniform3(rng, 2.0),
        unit3(rng) * rng.random_range(0.0..max_angle),
        rng.random_range(-1.0..1.0),
    )
}

pub fn rotation<R: Rng>(rng: &mut R) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(unit3(rng) * rng.random_range(0.0..3.0))
}

pub fn sim3<R: Rng>(rng: &mut R) -> Sim3 {
    Sim3::new(rng.random_range(0.3..3.0), rotation(rng), uniform3(rng, 5.0))
}

pub fn points<R: Rng>(rng: &mut R, n: usize, half: f64) -> Vec<Vector3<f64>> {
    (0..n).map(|_| uniform3(rng, half)).collect()
}

/// Smooth textured anchor looking down +z at a tilted plane.
pub fn textured_anchor<R: Rng>(rng: &mut R, pose: Sim3, width: usize, height: usize) -> AnchorKeyframe {
    let (fx, fy) = (rng.random_range(0.1..0.4), rng.random_range(0.1..0.4));
    let (px, py) = (rng.random_range(0.0..6.0), rng.random_range(0.0..6.0));
    let image = Grid::from_fn(width, height, |x, y| {
        (0.5 + 0.25 * (fx * x as f64 + px).sin() * (fy * y as f64 + py).cos()
            + 0.1 * (0.07 * (x + 2 * y) as f64).sin()) as f32
    });
    let (d0, gx, gy) = (
        rng.random_range(0.3..0.6),
        rng.random_range(-1e-3..1e-3),
        rng.random_range(-1e-3..1e-3),
    );
    let disparity = Grid::from_fn(width, height, |x, y| (d0 + gx * x as f64 + gy * y as f64) as f32);
    AnchorKeyframe {
        pose,
        image: Image::gray(image),
        disparity,
        intrinsics: Intrinsics::centered(0.8 * width as f64, width, height),
    }
}

/// Valid random summary with a small textured anchor.
pub fn summary<R: Rng>(rng: &mut R, id: SubmapId) -> SubmapSummary {
    let (w, h) = (rng.random_range(2..24usize), rng.random_range(2..18usize));
    let pose = Sim3::new(1.0, rotation(rng), uniform3(rng, 3.0));
    let mut anchor = textured_anchor(rng, pose, w, h);
    for d in anchor.disparity.data.iter_mut() {
        if rng.random_bool(0.15) {
            *d = 0.0;
        }
    }
    let mut descriptor: Vec<f64> = (0..DESCRIPTOR_DIM).map(|_| rng.sample(StandardNormal)).collect();
    let n = descriptor.iter().map(|x| x * x).sum::<f64>().sqrt();
    descriptor.iter_mut().for_each(|x| *x /= n);
    let salient = (0..rng.random_range(0..64))
        .map(|_| {
            let mut descriptor = [0f32; LOCAL_DESCRIPTOR_DIM];
            descriptor
                .iter_mut()
                .for_each(|x| *x = rng.sample::<f32, _>(StandardNormal));
            SalientPoint {
                position: uniform3(rng, 4.0),
                descriptor,
            }
        })
        .collect();
    let n = rng.random_range(0..300);
    let cloud = points(rng, n, 4.0);
    let mut s = SubmapSummary {
        id,
        descriptor,
        salient,
        cloud,
        aabb: Aabb::new(Vector3::zeros(), Vector3::zeros()),
        anchor,
    };
    s.recompute_aabb();
    s.validate().expect("generated summary is valid");
    s
}
