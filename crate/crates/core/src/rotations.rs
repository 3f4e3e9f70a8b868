//! 3-vectors, 3x3 matrices and the SO(3) exponential / logarithm.
//!
//! Both containers are generic over [`Scalar`] so that the same code runs
//! on plain `f64` and on taped variables. Matrices are row-major:
//! `m[r][c]`.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Below this angle `exp` switches to its second-order Taylor expansion.
pub const EXP_SMALL_ANGLE: f64 = 1e-7;
/// Within this distance of pi `log` extracts the axis from the diagonal.
pub const LOG_NEAR_PI: f64 = 1e-4;
/// Taped logarithms refuse angles above `pi - LOG_TAPED_LIMIT`.
pub const LOG_TAPED_LIMIT: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3<T = f64> {
    pub x: T,
    pub y: T,
    pub z: T,
}

/// Axis-angle rotation: direction is the axis, magnitude the angle (rad).
pub type AxisAngle<T = f64> = Vec3<T>;

impl<T: Scalar> Vec3<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Vec3::new(T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn splat_cst(v: Vec3<f64>) -> Self {
        Vec3::new(T::cst(v.x), T::cst(v.y), T::cst(v.z))
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm(self) -> T {
        T::norm3(self.x, self.y, self.z)
    }

    #[inline]
    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn scale(self, s: T) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    #[inline]
    pub fn scale_f(self, s: f64) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    /// Component-wise product with a constant vector.
    #[inline]
    pub fn hadamard_f(self, d: Vec3<f64>) -> Self {
        Vec3::new(self.x * d.x, self.y * d.y, self.z * d.z)
    }

    pub fn values(self) -> Vec3<f64> {
        Vec3::new(self.x.value(), self.y.value(), self.z.value())
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Vec3<f64> {
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl<T: Scalar> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl<T: Scalar> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Scalar> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Scalar> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Scalar> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Scalar> SubAssign for Vec3<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl Serialize for Vec3<f64> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.x, self.y, self.z].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vec3<f64> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [x, y, z] = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3 { x, y, z })
    }
}

/// Right-handed cross product.
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    a.cross(b)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3<T = f64> {
    pub m: [[T; 3]; 3],
}

impl<T: Scalar> Mat3<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Mat3 {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    pub fn from_rows(m: [[T; 3]; 3]) -> Self {
        Mat3 { m }
    }

    pub fn diag(d: Vec3<T>) -> Self {
        let z = T::zero();
        Mat3 {
            m: [[d.x, z, z], [z, d.y, z], [z, z, d.z]],
        }
    }

    pub fn transpose(&self) -> Self {
        let m = &self.m;
        Mat3 {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    #[inline]
    pub fn mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// `selfᵀ · v` without forming the transpose.
    #[inline]
    pub fn tr_mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
            m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z,
        )
    }

    /// Multiplies by a constant vector (no tape nodes for the constant side).
    #[inline]
    pub fn mul_vec_f(&self, v: Vec3<f64>) -> Vec3<T> {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn matmul(&self, o: &Self) -> Self {
        let a = &self.m;
        let b = &o.m;
        let mut m = [[T::zero(); 3]; 3];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, out) in row.iter_mut().enumerate() {
                *out = a[r][0] * b[0][c] + a[r][1] * b[1][c] + a[r][2] * b[2][c];
            }
        }
        Mat3 { m }
    }

    /// `selfᵀ · o`.
    pub fn tr_matmul(&self, o: &Self) -> Self {
        let a = &self.m;
        let b = &o.m;
        let mut m = [[T::zero(); 3]; 3];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, out) in row.iter_mut().enumerate() {
                *out = a[0][r] * b[0][c] + a[1][r] * b[1][c] + a[2][r] * b[2][c];
            }
        }
        Mat3 { m }
    }

    pub fn trace(&self) -> T {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn values(&self) -> Mat3<f64> {
        let mut m = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] = self.m[r][c].value();
            }
        }
        Mat3 { m }
    }
}

impl Mat3<f64> {
    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Largest absolute entry of `RᵀR - I`.
    pub fn orthonormality_error(&self) -> f64 {
        let p = self.tr_matmul(self);
        let mut e: f64 = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                let target = if r == c { 1.0 } else { 0.0 };
                e = e.max((p.m[r][c] - target).abs());
            }
        }
        e
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        let mut e: f64 = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                e = e.max((self.m[r][c] - o.m[r][c]).abs());
            }
        }
        e
    }
}

impl<T: Scalar> Mul for Mat3<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.matmul(&o)
    }
}

impl<T: Scalar> Mul<Vec3<T>> for Mat3<T> {
    type Output = Vec3<T>;
    fn mul(self, v: Vec3<T>) -> Vec3<T> {
        self.mul_vec(v)
    }
}

/// SO(3) exponential (Rodrigues' formula), generic over the scalar type.
pub fn exp_so3<T: Scalar>(aa: Vec3<T>) -> Mat3<T> {
    let (x, y, z) = (aa.x, aa.y, aa.z);
    let theta_sq = aa.norm_sq();
    // R = c·I + A·[aa]x + B·aa·aaᵀ
    let (c, a, b) = if theta_sq.value() < EXP_SMALL_ANGLE * EXP_SMALL_ANGLE {
        (T::one() - theta_sq * 0.5, T::one(), T::cst(0.5))
    } else {
        let theta = theta_sq.sqrt();
        let (s, co) = (theta.sin(), theta.cos());
        (co, s / theta, (T::one() - co) / theta_sq)
    };
    let (ax, ay, az) = (a * x, a * y, a * z);
    let (bx, by) = (b * x, b * y);
    let bxy = bx * y;
    let bxz = bx * z;
    let byz = by * z;
    Mat3::from_rows([
        [c + bx * x, bxy - az, bxz + ay],
        [bxy + az, c + by * y, byz - ax],
        [bxz - ay, byz + ax, c + b * z * z],
    ])
}

/// SO(3) logarithm returning an axis-angle with angle in `[0, pi]`.
///
/// Uses `atan2(|v|, (tr R - 1)/2)` where `v` is the axial vector of the
/// skew part, which stays well conditioned at small angles. Near pi the
/// axis is taken from the diagonal of `(R + I)/2`. Taped scalars are not
/// allowed within `LOG_TAPED_LIMIT` of pi.
pub fn log_so3<T: Scalar>(r: &Mat3<T>) -> Result<Vec3<T>> {
    let m = &r.m;
    let c = (r.trace() - 1.0) * 0.5;
    let v = Vec3::new(
        (m[2][1] - m[1][2]) * 0.5,
        (m[0][2] - m[2][0]) * 0.5,
        (m[1][0] - m[0][1]) * 0.5,
    );
    let s_sq = v.norm_sq();
    let theta_val = s_sq.value().sqrt().atan2(c.value());

    if T::TAPED && theta_val > PI - LOG_TAPED_LIMIT {
        return Err(Error::invalid(format!(
            "differentiable matrix logarithm evaluated at angle {theta_val:.6}, too close to pi"
        )));
    }

    if theta_val > PI - LOG_NEAR_PI {
        return Ok(log_near_pi(r, c, v, s_sq));
    }

    if s_sq.value() < 1e-8 && c.value() > 0.0 {
        // theta / sin(theta) as a series in sin^2; c > 0 on this branch
        let f = T::one() + s_sq / 6.0 + s_sq * s_sq * (3.0 / 40.0);
        return Ok(v.scale(f));
    }
    let s = s_sq.sqrt();
    let theta = s.atan2(c);
    Ok(v.scale(theta / s))
}

fn log_near_pi<T: Scalar>(r: &Mat3<T>, c: T, v: Vec3<T>, s_sq: T) -> Vec3<T> {
    let m = &r.m;
    // (R + I)/2 = (1+c)/2 I + (1-c)/2 n nᵀ + skew part
    let one_minus_c_half = (T::one() - c) * 0.5;
    let one_plus_c_half = (T::one() + c) * 0.5;
    let diag = [m[0][0], m[1][1], m[2][2]];
    let k = (0..3)
        .max_by(|&i, &j| diag[i].value().total_cmp(&diag[j].value()))
        .unwrap_or(0);
    let nk_sq = ((diag[k] + 1.0) * 0.5 - one_plus_c_half) / one_minus_c_half;
    let nk = if nk_sq.value() > 0.0 { nk_sq.sqrt() } else { T::zero() };
    let mut n = [T::zero(); 3];
    for (j, nj) in n.iter_mut().enumerate() {
        *nj = if j == k {
            nk
        } else {
            let sym = (m[k][j] + m[j][k]) * 0.25;
            sym / (one_minus_c_half * nk)
        };
    }
    let mut axis = Vec3::from_array(n);
    let axis_norm = axis.norm();
    axis = axis.scale(T::one() / axis_norm);
    // v = sin(theta)·n fixes the sign whenever sin(theta) is not exactly 0
    if axis.dot(v).value() < 0.0 {
        axis = -axis;
    }
    let theta = s_sq.sqrt().atan2(c);
    axis.scale(theta)
}

/// Rotation matrix of an axis-angle vector.
pub fn rodrigues(aa: AxisAngle) -> Result<Mat3> {
    if !aa.is_finite() {
        return Err(Error::invalid(format!("non-finite axis-angle {aa:?}")));
    }
    Ok(exp_so3(aa))
}

/// Axis-angle of a rotation matrix (angle in `[0, pi]`).
pub fn mat_log(r: &Mat3) -> Result<AxisAngle> {
    if !r.is_finite() {
        return Err(Error::invalid("non-finite rotation matrix"));
    }
    let err = r.orthonormality_error();
    if err > 1e-6 || r.determinant() < 0.0 {
        return Err(Error::invalid(format!(
            "not a rotation matrix (orthonormality error {err:.3e}, det {:.6})",
            r.determinant()
        )));
    }
    log_so3(r)
}

/// Rotation matrix about a unit axis, for tests and motion synthesis.
pub fn axis_rotation(axis: Vec3, angle: f64) -> Mat3 {
    let n = axis.scale_f(1.0 / axis.norm());
    exp_so3(n.scale_f(angle))
}
