//! Rotation quaternions, 3-vectors and the quaternion dissimilarity metric.

use core::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Norms at or below this are treated as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum QuatError {
    #[error("quaternion norm is too small to normalize")]
    DegenerateQuaternion,
    #[error("quaternion sequence is empty")]
    EmptySequence,
    #[error("kalman parameters must be strictly positive and finite")]
    InvalidKalmanParams,
}

/// A plain 3-vector in meters (or a unit direction).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for Vec3 {
    fn from([x, y, z]: [f64; 3]) -> Self {
        Self { x, y, z }
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    /// Unit vector in the same direction, or `None` when shorter than `min_norm`.
    pub fn normalized(self, min_norm: f64) -> Option<Vec3> {
        let n = self.norm();
        (n >= min_norm && n.is_finite()).then(|| self.scale(1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// A rotation quaternion `w + xi + yj + zk`.
///
/// Serialized as `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 4]> for Quat {
    fn from([w, x, y, z]: [f64; 4]) -> Self {
        Self { w, x, y, z }
    }
}

impl From<Quat> for [f64; 4] {
    fn from(q: Quat) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat::new(1.0, 0.0, 0.0, 0.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let axis = axis.normalized(DEGENERATE_NORM).unwrap_or(Vec3::X);
        let half = angle * 0.5;
        let s = libm::sin(half);
        Quat::new(libm::cos(half), axis.x * s, axis.y * s, axis.z * s)
    }

    /// Shortest-arc rotation taking unit vector `from` onto unit vector `to`.
    ///
    /// When the two are antiparallel the rotation is 180° about `fallback_axis`,
    /// which must be perpendicular to `from`.
    pub fn from_to(from: Vec3, to: Vec3, fallback_axis: Vec3) -> Self {
        let d = from.dot(to);
        if 1.0 + d < 1e-12 {
            return Quat::new(0.0, fallback_axis.x, fallback_axis.y, fallback_axis.z)
                .normalized()
                .unwrap_or(Quat::new(0.0, 1.0, 0.0, 0.0));
        }
        let c = from.cross(to);
        Quat::new(1.0 + d, c.x, c.y, c.z)
            .normalized()
            .unwrap_or(Quat::IDENTITY)
    }

    pub fn dot(self, o: Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn scale(self, s: f64) -> Quat {
        Quat::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn normalized(self) -> Result<Quat, QuatError> {
        let n = self.norm();
        if !(n > DEGENERATE_NORM) || !n.is_finite() {
            return Err(QuatError::DegenerateQuaternion);
        }
        Ok(self.scale(1.0 / n))
    }

    /// `q` or `-q`, whichever has `w > 0`; for `w == 0` the first nonzero of
    /// `x, y, z` is made positive.
    pub fn canonical(self) -> Quat {
        let lead = [self.w, self.x, self.y, self.z]
            .into_iter()
            .find(|c| *c != 0.0)
            .unwrap_or(0.0);
        if lead < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn is_canonical(self) -> bool {
        self.canonical() == self
    }

    pub fn conjugate(self) -> Quat {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Rotates `v` by this (unit) quaternion.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v).scale(2.0);
        v + t.scale(self.w) + u.cross(t)
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(self) -> f64 {
        2.0 * libm::acos(libm::fabs(self.w).min(1.0))
    }

    /// Angle in radians of the relative rotation between two unit quaternions.
    pub fn angle_to(self, o: Quat) -> f64 {
        2.0 * libm::acos(libm::fabs(self.dot(o)).min(1.0))
    }

    /// Spherical linear interpolation along the shorter arc, `t ∈ [0, 1]`.
    pub fn slerp(self, o: Quat, t: f64) -> Quat {
        let mut d = self.dot(o);
        let mut end = o;
        if d < 0.0 {
            d = -d;
            end = -o;
        }
        if d > 1.0 - 1e-9 {
            let lerp = Quat::new(
                self.w + (end.w - self.w) * t,
                self.x + (end.x - self.x) * t,
                self.y + (end.y - self.y) * t,
                self.z + (end.z - self.z) * t,
            );
            return lerp.normalized().unwrap_or(self);
        }
        let theta = libm::acos(d);
        let s = libm::sin(theta);
        let a = libm::sin((1.0 - t) * theta) / s;
        let b = libm::sin(t * theta) / s;
        Quat::new(
            self.w * a + end.w * b,
            self.x * a + end.x * b,
            self.y * a + end.y * b,
            self.z * a + end.z * b,
        )
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn is_unit(self, tol: f64) -> bool {
        libm::fabs(self.norm() - 1.0) <= tol
    }

    /// Dissimilarity between two unit quaternions, `1 − |⟨q1, q2⟩|`.
    ///
    /// Equal to `1 − cos(θ/2)` for a relative rotation of `θ ∈ [0, π]`, so the
    /// score lies in `[0, 1]` and does not depend on either operand's sign.
    ///
    /// Evaluated as `½·min(‖q1 − q2‖², ‖q1 + q2‖²)`, the same quantity for
    /// unit inputs, which is exactly zero for identical operands and avoids
    /// cancellation at small angles.
    #[inline]
    pub fn dissimilarity(self, o: Quat) -> f64 {
        let sq = |a: f64, b: f64, c: f64, d: f64| a * a + b * b + c * c + d * d;
        let minus = sq(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z);
        let plus = sq(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z);
        (0.5 * minus.min(plus)).min(1.0)
    }
}

impl Neg for Quat {
    type Output = Quat;
    fn neg(self) -> Quat {
        Quat::new(-self.w, -self.x, -self.y, -self.z)
    }
}

impl Mul for Quat {
    type Output = Quat;
    fn mul(self, r: Quat) -> Quat {
        Quat::new(
            self.w * r.w - self.x * r.x - self.y * r.y - self.z * r.z,
            self.w * r.x + self.x * r.w + self.y * r.z - self.z * r.y,
            self.w * r.y - self.x * r.z + self.y * r.w + self.z * r.x,
            self.w * r.z + self.x * r.y - self.y * r.x + self.z * r.w,
        )
    }
}

pub fn normalize(q: Quat) -> Result<Quat, QuatError> {
    q.normalized()
}

pub fn canonicalize(q: Quat) -> Quat {
    q.canonical()
}

/// Normalizes both operands, then scores them with [`Quat::dissimilarity`].
pub fn quaternion_dissimilarity(q1: Quat, q2: Quat) -> Result<f64, QuatError> {
    Ok(q1.normalized()?.dissimilarity(q2.normalized()?))
}
