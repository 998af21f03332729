//! Pinhole cameras and dense per-pixel grids.
//!
//! Pixel `(x, y)` has its center at integer coordinates; projection is
//! `u = fx X/Z + cx`, `v = fy Y/Z + cy` in the camera frame (z forward).

use nalgebra::{Matrix2x3, Vector3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self { fx, fy, cx, cy }
    }

    /// Focal length `f` with the principal point at the image center.
    pub fn centered(f: f64, width: usize, height: usize) -> Self {
        Self::new(
            f,
            f,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
        )
    }

    pub fn is_valid_for(&self, width: usize, height: usize) -> bool {
        self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cy > 0.0
            && self.cx < width as f64
            && self.cy < height as f64
    }

    /// Camera-frame point at pixel `(u, v)` with depth `z`.
    pub fn backproject(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z)
    }

    /// Unnormalized ray through `(u, v)` with unit z component.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Pixel of a camera-frame point; `None` behind the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Jacobian of [`Intrinsics::project`] with respect to the point.
    pub fn project_jacobian(&self, p: &Vector3<f64>) -> Matrix2x3<f64> {
        let iz = 1.0 / p.z;
        let iz2 = iz * iz;
        Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * p.x * iz2,
            0.0,
            self.fy * iz,
            -self.fy * p.y * iz2,
        )
    }
}

/// Row-major single-channel grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Grid {
    pub fn new(width: usize, height: usize, fill: f32) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Grayscale (1 channel) or RGB (3 channels) image with values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn gray(grid: Grid) -> Self {
        Self {
            width: grid.width,
            height: grid.height,
            channels: 1,
            data: grid.data,
        }
    }

    /// Mean over channels at an integer pixel.
    #[inline]
    pub fn intensity(&self, x: usize, y: usize) -> f64 {
        let base = (y * self.width + x) * self.channels;
        if self.channels == 1 {
            return self.data[base] as f64;
        }
        let sum: f64 = self.data[base..base + self.channels]
            .iter()
            .map(|v| *v as f64)
            .sum();
        sum / self.channels as f64
    }

    pub fn intensity_grid(&self) -> Grid {
        Grid::from_fn(self.width, self.height, |x, y| self.intensity(x, y) as f32)
    }

    /// Bilinear intensity and its image-space gradient; `None` outside
    /// `[0, W-1] x [0, H-1]`.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<(f64, f64, f64)> {
        if !(x >= 0.0 && y >= 0.0) || self.width < 2 || self.height < 2 {
            return None;
        }
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if x > max_x || y > max_y {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width - 2);
        let y0 = (y.floor() as usize).min(self.height - 2);
        let ax = x - x0 as f64;
        let ay = y - y0 as f64;
        let i00 = self.intensity(x0, y0);
        let i10 = self.intensity(x0 + 1, y0);
        let i01 = self.intensity(x0, y0 + 1);
        let i11 = self.intensity(x0 + 1, y0 + 1);
        let top = i00 + ax * (i10 - i00);
        let bottom = i01 + ax * (i11 - i01);
        let value = top + ay * (bottom - top);
        let dx = (1.0 - ay) * (i10 - i00) + ay * (i11 - i01);
        let dy = bottom - top;
        Some((value, dx, dy))
    }
}
