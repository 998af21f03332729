//! Pixel saliency, salient-point selection and registration-cloud decimation.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use super::{LocalDescriptor, SummaryError, LOCAL_DESCRIPTOR_DIM, MAX_CLOUD};
use crate::camera::{Grid, Image};
use crate::voxel::voxel_key;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SaliencyWeights {
    /// Disparity-gradient weight.
    pub lambda_d: f64,
    /// Feature-magnitude weight.
    pub lambda_f: f64,
}

impl Default for SaliencyWeights {
    fn default() -> Self {
        Self {
            lambda_d: 0.35,
            lambda_f: 0.10,
        }
    }
}

/// Row-major per-pixel score.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ScoreMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Central difference along one axis, one-sided at the borders, zero for a
/// single-sample axis.
fn diff(sample: impl Fn(usize) -> f64, i: usize, n: usize) -> f64 {
    if n < 2 {
        0.0
    } else if i == 0 {
        sample(1) - sample(0)
    } else if i == n - 1 {
        sample(n - 1) - sample(n - 2)
    } else {
        0.5 * (sample(i + 1) - sample(i - 1))
    }
}

/// `σ = ‖∇F‖ + λ_d ‖∇d‖ + λ_F ‖F‖`, with the feature norms taken over all
/// channels.
pub fn score_saliency(
    features: &Image,
    disparity: &Grid,
    weights: &SaliencyWeights,
) -> Result<ScoreMap, SummaryError> {
    let (w, h, c) = (features.width, features.height, features.channels);
    if disparity.width != w || disparity.height != h {
        return Err(SummaryError::DimensionMismatch(format!(
            "features {}x{}, disparity {}x{}",
            w, h, disparity.width, disparity.height
        )));
    }
    if features.data.len() != w * h * c || disparity.data.len() != w * h {
        return Err(SummaryError::DimensionMismatch("buffer size".into()));
    }
    let f = |x: usize, y: usize, ch: usize| features.data[(y * w + x) * c + ch] as f64;
    let d = |x: usize, y: usize| disparity.get(x, y) as f64;
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut grad_f = 0.0;
            let mut mag_f = 0.0;
            for ch in 0..c {
                let gx = diff(|i| f(i, y, ch), x, w);
                let gy = diff(|j| f(x, j, ch), y, h);
                grad_f += gx * gx + gy * gy;
                mag_f += f(x, y, ch).powi(2);
            }
            let gx = diff(|i| d(i, y), x, w);
            let gy = diff(|j| d(x, j), y, h);
            let grad_d = (gx * gx + gy * gy).sqrt();
            data.push(grad_f.sqrt() + weights.lambda_d * grad_d + weights.lambda_f * mag_f.sqrt());
        }
    }
    Ok(ScoreMap {
        width: w,
        height: h,
        data,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SalientPixel {
    pub x: usize,
    pub y: usize,
    pub score: f64,
    pub position: Vector3<f64>,
}

/// The `k` best-scoring pixels with a valid position, by descending score and
/// then row-major index.
pub fn select_salient(
    score: &ScoreMap,
    positions: &[Option<Vector3<f64>>],
    k: usize,
) -> Vec<SalientPixel> {
    let mut idx: Vec<usize> = (0..score.data.len())
        .filter(|&i| positions.get(i).is_some_and(|p| p.is_some()))
        .collect();
    idx.sort_by(|&a, &b| score.data[b].total_cmp(&score.data[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.into_iter()
        .map(|i| SalientPixel {
            x: i % score.width,
            y: i / score.width,
            score: score.data[i],
            position: positions[i].unwrap(),
        })
        .collect()
}

/// 8x4 intensity patch around `(x, y)` (columns `x-4..x+3`, rows `y-2..y+1`,
/// clamped), mean-removed and L2-normalized; zero for a flat patch.
pub fn patch_descriptor(image: &Image, x: usize, y: usize) -> LocalDescriptor {
    let mut out = [0f32; LOCAL_DESCRIPTOR_DIM];
    let mut vals = [0f64; LOCAL_DESCRIPTOR_DIM];
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    for (r, dy) in (-2isize..2).enumerate() {
        for (c, dx) in (-4isize..4).enumerate() {
            let px = clamp(x as isize + dx, image.width);
            let py = clamp(y as isize + dy, image.height);
            vals[r * 8 + c] = image.intensity(px, py);
        }
    }
    let mean = vals.iter().sum::<f64>() / LOCAL_DESCRIPTOR_DIM as f64;
    vals.iter_mut().for_each(|v| *v -= mean);
    let norm = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 1e-9 {
        for (o, v) in out.iter_mut().zip(vals) {
            *o = (v / norm) as f32;
        }
    }
    out
}

/// Voxel centroids, at most [`MAX_CLOUD`] of them, in ascending key order.
/// Points whose voxel index is out of range are skipped.
pub fn voxel_downsample(points: &[Vector3<f64>], voxel: f64) -> Vec<Vector3<f64>> {
    assert!(voxel > 0.0, "voxel size must be positive");
    let mut bins: BTreeMap<u64, (Vector3<f64>, usize)> = BTreeMap::new();
    for p in points {
        if let Ok(key) = voxel_key(p, voxel) {
            let e = bins.entry(key).or_insert((Vector3::zeros(), 0));
            e.0 += p;
            e.1 += 1;
        }
    }
    bins.into_values()
        .take(MAX_CLOUD)
        .map(|(sum, n)| sum / n as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_inputs_score_feature_magnitude() {
        let img = Image::gray(Grid::new(5, 4, 0.6));
        let disp = Grid::new(5, 4, 0.3);
        let s = score_saliency(&img, &disp, &SaliencyWeights::default()).unwrap();
        assert!(s.data.iter().all(|v| (v - 0.06).abs() < 1e-7));
    }

    #[test]
    fn disparity_step_peaks_on_edge() {
        let img = Image::gray(Grid::new(6, 3, 0.0));
        let disp = Grid::from_fn(6, 3, |x, _| if x < 3 { 1.0 } else { 2.0 });
        let s = score_saliency(&img, &disp, &SaliencyWeights::default()).unwrap();
        assert!((s.get(2, 1) - 0.35 * 0.5).abs() < 1e-12);
        assert!((s.get(3, 1) - 0.35 * 0.5).abs() < 1e-12);
        assert_eq!(s.get(0, 1), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let img = Image::gray(Grid::new(5, 4, 0.0));
        let disp = Grid::new(4, 4, 0.0);
        assert!(score_saliency(&img, &disp, &SaliencyWeights::default()).is_err());
    }

    #[test]
    fn select_ties_row_major() {
        let score = ScoreMap {
            width: 3,
            height: 2,
            data: vec![1.0; 6],
        };
        let pos = vec![Some(Vector3::zeros()); 6];
        let sel = select_salient(&score, &pos, 3);
        assert_eq!(
            sel.iter().map(|p| (p.x, p.y)).collect::<Vec<_>>(),
            vec![(0, 0), (1, 0), (2, 0)]
        );
        assert!(select_salient(&score, &pos, 0).is_empty());
    }

    #[test]
    fn downsample_simple_cases() {
        let one = voxel_downsample(
            &[Vector3::new(0.01, 0.01, 0.01), Vector3::new(0.03, 0.03, 0.03)],
            0.05,
        );
        assert_eq!(one.len(), 1);
        assert!((one[0] - Vector3::new(0.02, 0.02, 0.02)).norm() < 1e-12);
        let two = voxel_downsample(&[Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)], 0.05);
        assert_eq!(two.len(), 2);
    }

    #[test]
    fn flat_patch_descriptor_is_zero() {
        let img = Image::gray(Grid::new(10, 10, 0.5));
        assert!(patch_descriptor(&img, 0, 9).iter().all(|v| *v == 0.0));
        let tex = Image::gray(Grid::from_fn(10, 10, |x, y| (x * y) as f32 * 0.01));
        let d = patch_descriptor(&tex, 5, 5);
        let n: f32 = d.iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-5);
    }
}
