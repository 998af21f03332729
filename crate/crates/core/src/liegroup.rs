//! Sim(3) similarity transforms.
//!
//! A transform `T = (s, R, t)` acts on a point as `T·p = s R p + t`. Rotations
//! are stored as unit quaternions and renormalized after every composition.
//!
//! Tangent vectors are ordered `[nu (3), omega (3), lambda (1)]` and map to the
//! Lie algebra element
//!
//! ```text
//! | [omega]x + lambda I   nu |
//! |          0             0 |
//! ```
//!
//! so `exp(nu, omega, lambda) = (e^lambda, exp([omega]x), V nu)` with the
//! scale-coupled matrix `V = ∫₀¹ e^{lambda s} exp(s [omega]x) ds`. The adjoint of
//! `T` in this ordering is
//!
//! ```text
//! | sR  [t]x R  -t |
//! |  0     R     0 |
//! |  0     0     1 |
//! ```
//!
//! `log` of a rotation by exactly π returns the axis whose leading nonzero
//! component is nonnegative; any other angle has a unique canonical logarithm
//! with `|omega| < π`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Quaternion, Rotation3, SMatrix, SVector, UnitQuaternion, Vector3};
use thiserror::Error;

pub type Vector7 = SVector<f64, 7>;
pub type Matrix7 = SMatrix<f64, 7, 7>;

/// Below this rotation angle / log-scale magnitude the V-matrix coefficients
/// switch to series expansions.
const SMALL: f64 = 1e-6;
/// Rotation angles below this use the θ-series for the V coefficients; the
/// closed form loses digits to cancellation well above `SMALL`.
const SERIES_THETA: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("scale must be finite and positive, got {0}")]
    NonPositiveScale(f64),
    #[error("rotation quaternion has norm {0}, expected 1")]
    NonUnitRotation(f64),
    #[error("non-finite component in transform")]
    NonFinite,
}

/// Skew-symmetric cross-product matrix `[v]x`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Element of the Lie algebra sim(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sim3Tangent {
    pub nu: Vector3<f64>,
    pub omega: Vector3<f64>,
    pub lambda: f64,
}

impl Sim3Tangent {
    pub fn new(nu: Vector3<f64>, omega: Vector3<f64>, lambda: f64) -> Self {
        Self { nu, omega, lambda }
    }

    pub fn zero() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros(), 0.0)
    }

    pub fn from_vector(v: &Vector7) -> Self {
        Self::new(
            Vector3::new(v[0], v[1], v[2]),
            Vector3::new(v[3], v[4], v[5]),
            v[6],
        )
    }

    pub fn to_vector(&self) -> Vector7 {
        Vector7::from_column_slice(&[
            self.nu.x,
            self.nu.y,
            self.nu.z,
            self.omega.x,
            self.omega.y,
            self.omega.z,
            self.lambda,
        ])
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn norm_squared(&self) -> f64 {
        self.to_vector().norm_squared()
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }

    /// Matrix of the Lie bracket `y -> [self, y]`.
    pub fn ad_matrix(&self) -> Matrix7 {
        let mut m = Matrix7::zeros();
        let w = skew(&self.omega);
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(w + Matrix3::identity() * self.lambda));
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&skew(&self.nu));
        m.fixed_view_mut::<3, 1>(0, 6).copy_from(&(-self.nu));
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&w);
        m
    }

    /// Right Jacobian `Jr(x)` with `exp(x + d) ≈ exp(x) exp(Jr(x) d)`.
    ///
    /// Evaluated exactly as `∫₀¹ exp(-s ad_x) ds`, the top-right block of the
    /// exponential of `[[-ad_x, I], [0, 0]]`.
    pub fn right_jacobian(&self) -> Matrix7 {
        let mut block = SMatrix::<f64, 14, 14>::zeros();
        block
            .fixed_view_mut::<7, 7>(0, 0)
            .copy_from(&(-self.ad_matrix()));
        block
            .fixed_view_mut::<7, 7>(0, 7)
            .copy_from(&Matrix7::identity());
        let e = block.exp();
        e.fixed_view::<7, 7>(0, 7).into_owned()
    }

    /// Inverse right Jacobian, `log(exp(x) exp(d)) ≈ x + Jr⁻¹(x) d`.
    pub fn right_jacobian_inverse(&self) -> Option<Matrix7> {
        self.right_jacobian().try_inverse()
    }
}

impl Add for Sim3Tangent {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.nu + o.nu, self.omega + o.omega, self.lambda + o.lambda)
    }
}

impl Sub for Sim3Tangent {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.nu - o.nu, self.omega - o.omega, self.lambda - o.lambda)
    }
}

impl Neg for Sim3Tangent {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.nu, -self.omega, -self.lambda)
    }
}

impl Mul<f64> for Sim3Tangent {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.nu * k, self.omega * k, self.lambda * k)
    }
}

/// Similarity transform `p -> s R p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sim3 {
    scale: f64,
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl Default for Sim3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl fmt::Display for Sim3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.rotation.quaternion();
        write!(
            f,
            "Sim3(s: {:.6}, q: [{:.6}, {:.6}, {:.6}, {:.6}], t: [{:.6}, {:.6}, {:.6}])",
            self.scale,
            q.w,
            q.i,
            q.j,
            q.k,
            self.translation.x,
            self.translation.y,
            self.translation.z
        )
    }
}

impl Sim3 {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Panics if `scale` is not finite and positive.
    pub fn new(scale: f64, rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        assert!(
            scale.is_finite() && scale > 0.0,
            "Sim3 scale must be positive, got {scale}"
        );
        Self {
            scale,
            rotation,
            translation,
        }
    }

    pub fn try_new(
        scale: f64,
        rotation: UnitQuaternion<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, LieError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(LieError::NonPositiveScale(scale));
        }
        if !translation.iter().all(|x| x.is_finite())
            || !rotation.coords.iter().all(|x| x.is_finite())
        {
            return Err(LieError::NonFinite);
        }
        Ok(Self {
            scale,
            rotation,
            translation,
        })
    }

    /// Builds from a rotation matrix assumed orthonormal with det +1.
    pub fn from_matrix_parts(scale: f64, rotation: &Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let rot = Rotation3::from_matrix_unchecked(*rotation);
        Self::new(scale, UnitQuaternion::from_rotation_matrix(&rot), translation)
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(1.0, UnitQuaternion::identity(), t)
    }

    pub fn from_scale(s: f64) -> Self {
        Self::new(s, UnitQuaternion::identity(), Vector3::zeros())
    }

    pub fn from_rotation(r: UnitQuaternion<f64>) -> Self {
        Self::new(1.0, r, Vector3::zeros())
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// Same rotation and translation, scale replaced.
    pub fn with_scale(&self, scale: f64) -> Self {
        Self::new(scale, self.rotation, self.translation)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Sim3) -> Sim3 {
        let q = self.rotation * other.rotation;
        Sim3 {
            scale: self.scale * other.scale,
            rotation: UnitQuaternion::new_normalize(q.into_inner()),
            translation: self.rotation * other.translation * self.scale + self.translation,
        }
    }

    pub fn inverse(&self) -> Sim3 {
        let inv_s = 1.0 / self.scale;
        let inv_r = self.rotation.inverse();
        Sim3 {
            scale: inv_s,
            rotation: inv_r,
            translation: -(inv_r * self.translation) * inv_s,
        }
    }

    /// `s R p + t`.
    pub fn act(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }

    /// `s R v`, the linear part only.
    pub fn act_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v * self.scale
    }

    pub fn exp(x: &Sim3Tangent) -> Sim3 {
        let theta = x.omega.norm();
        let rotation = UnitQuaternion::from_scaled_axis(x.omega);
        let v = v_matrix(x.lambda, &x.omega, theta);
        Sim3 {
            scale: x.lambda.exp(),
            rotation,
            translation: v * x.nu,
        }
    }

    pub fn log(&self) -> Sim3Tangent {
        let lambda = self.scale.ln();
        let omega = so3_log(&self.rotation);
        let theta = omega.norm();
        let v = v_matrix(lambda, &omega, theta);
        let nu = v
            .lu()
            .solve(&self.translation)
            .expect("V matrix is invertible for canonical rotation angles");
        Sim3Tangent::new(nu, omega, lambda)
    }

    /// Rotation angle in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        so3_log(&self.rotation).norm()
    }

    pub fn adjoint_matrix(&self) -> Matrix7 {
        let r = self.rotation_matrix();
        let mut m = Matrix7::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(r * self.scale));
        m.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(skew(&self.translation) * r));
        m.fixed_view_mut::<3, 1>(0, 6)
            .copy_from(&(-self.translation));
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        m[(6, 6)] = 1.0;
        m
    }

    /// `Ad_T x`, satisfying `T exp(x) T⁻¹ = exp(Ad_T x)`.
    pub fn adjoint(&self, x: &Sim3Tangent) -> Sim3Tangent {
        let omega = self.rotation * x.omega;
        let nu = self.rotation * x.nu * self.scale + self.translation.cross(&omega)
            - self.translation * x.lambda;
        Sim3Tangent::new(nu, omega, x.lambda)
    }

    /// `[scale, qw, qx, qy, qz, tx, ty, tz]`.
    pub fn to_array(&self) -> [f64; 8] {
        let q = self.rotation.quaternion();
        [
            self.scale,
            q.w,
            q.i,
            q.j,
            q.k,
            self.translation.x,
            self.translation.y,
            self.translation.z,
        ]
    }

    /// Inverse of [`Sim3::to_array`]; the quaternion is accepted as stored
    /// when its norm is within 1e-9 of one, otherwise rejected.
    pub fn from_array(a: &[f64; 8]) -> Result<Sim3, LieError> {
        if !a.iter().all(|x| x.is_finite()) {
            return Err(LieError::NonFinite);
        }
        let q = Quaternion::new(a[1], a[2], a[3], a[4]);
        let n = q.norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(LieError::NonUnitRotation(n));
        }
        Sim3::try_new(
            a[0],
            UnitQuaternion::new_unchecked(q),
            Vector3::new(a[5], a[6], a[7]),
        )
    }

    /// Max absolute difference over scale, rotation matrix and translation.
    pub fn max_abs_diff(&self, other: &Sim3) -> f64 {
        let ds = (self.scale - other.scale).abs();
        let dr = (self.rotation_matrix() - other.rotation_matrix()).amax();
        let dt = (self.translation - other.translation).amax();
        ds.max(dr).max(dt)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

impl Mul for Sim3 {
    type Output = Sim3;
    fn mul(self, rhs: Sim3) -> Sim3 {
        self.compose(&rhs)
    }
}

impl<'a> Mul<&'a Sim3> for &'a Sim3 {
    type Output = Sim3;
    fn mul(self, rhs: &'a Sim3) -> Sim3 {
        self.compose(rhs)
    }
}

fn so3_log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let mut w = q.w;
    let mut v = q.imag();
    if w < 0.0 {
        w = -w;
        v = -v;
    }
    let n = v.norm();
    if n < SMALL {
        // 2 atan2(n, w) / n expanded around n = 0
        let factor = 2.0 / w - 2.0 * n * n / (3.0 * w * w * w);
        return v * factor;
    }
    if w == 0.0 {
        let mut axis = v / n;
        let lead = axis.iter().copied().find(|c| *c != 0.0).unwrap_or(0.0);
        if lead < 0.0 {
            axis = -axis;
        }
        return axis * std::f64::consts::PI;
    }
    let theta = 2.0 * n.atan2(w);
    v * (theta / n)
}

/// `∫₀¹ sⁿ e^{λs} ds`.
fn moment(n: usize, lambda: f64) -> f64 {
    if lambda.abs() <= 5.0 {
        let mut sum = 0.0;
        let mut pow_over_fact = 1.0;
        for k in 0..48 {
            sum += pow_over_fact / (n + k + 1) as f64;
            pow_over_fact *= lambda / (k + 1) as f64;
        }
        sum
    } else {
        // upward recurrence m_n = (e^λ - n m_{n-1}) / λ, stable for |λ| > n
        let e = lambda.exp();
        let mut m = lambda.exp_m1() / lambda;
        for k in 1..=n {
            m = (e - k as f64 * m) / lambda;
        }
        m
    }
}

/// Coefficients `(A, B, C)` of `V = A I + B W + C W²` with `W = [omega]x`.
fn v_coefficients(lambda: f64, theta: f64) -> (f64, f64, f64) {
    let a = if lambda.abs() < SMALL {
        1.0 + lambda / 2.0 + lambda * lambda / 6.0
    } else {
        lambda.exp_m1() / lambda
    };
    if theta < SERIES_THETA {
        // B = Σ (-1)^j θ^{2j} m_{2j+1} / (2j+1)!,  C = Σ (-1)^j θ^{2j} m_{2j+2} / (2j+2)!
        let t2 = theta * theta;
        let b = moment(1, lambda) - t2 * moment(3, lambda) / 6.0
            + t2 * t2 * moment(5, lambda) / 120.0;
        let c = moment(2, lambda) / 2.0 - t2 * moment(4, lambda) / 24.0
            + t2 * t2 * moment(6, lambda) / 720.0;
        return (a, b, c);
    }
    let e = lambda.exp();
    let (st, ct) = theta.sin_cos();
    let denom = lambda * lambda + theta * theta;
    let int_sin = (e * (lambda * st - theta * ct) + theta) / denom;
    let int_cos = (e * (lambda * ct + theta * st) - lambda) / denom;
    let b = int_sin / theta;
    let c = (a - int_cos) / (theta * theta);
    (a, b, c)
}

fn v_matrix(lambda: f64, omega: &Vector3<f64>, theta: f64) -> Matrix3<f64> {
    let (a, b, c) = v_coefficients(lambda, theta);
    let w = skew(omega);
    Matrix3::identity() * a + w * b + w * w * c
}
