//! Rigid-body pose primitives: 3-vectors, unit quaternions and 6-DOF poses.
//!
//! Orientation is carried for dataset fidelity; only positions enter the
//! fitness computations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Quaternion norm may deviate from 1 by at most this much.
pub const QUAT_NORM_TOL: f64 = 1e-6;

/// 3-vector in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec3<R> {
    pub x: R,
    pub y: R,
    pub z: R,
}

impl<R: Real> Vec3<R> {
    pub fn new(x: R, y: R, z: R) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(R::zero(), R::zero(), R::zero())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(&self, other: &Self) -> R {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> R {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: R) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }

    /// Interpolation as `a*(1-t) + b*t`, exact at both endpoints.
    pub fn lerp(a: &Self, b: &Self, t: R) -> Self {
        let u = R::one() - t;
        Self::new(a.x * u + b.x * t, a.y * u + b.y * t, a.z * u + b.z * t)
    }
}

/// Euclidean distance between two points, meters.
pub fn euclidean_distance<R: Real>(a: &Vec3<R>, b: &Vec3<R>) -> R {
    a.sub(b).norm()
}

/// Unit quaternion stored as (x, y, z, w), matching the dataset column order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitQuat<R> {
    pub x: R,
    pub y: R,
    pub z: R,
    pub w: R,
}

impl<R: Real> UnitQuat<R> {
    /// Normalizes the components; errors when the input has no direction
    /// (zero or non-finite norm).
    pub fn new(x: R, y: R, z: R, w: R) -> Result<Self> {
        let norm = (x * x + y * y + z * z + w * w).sqrt();
        if !norm.is_finite() || norm < real(1e-12) {
            return Err(Error::InvalidPose(format!(
                "quaternion ({x}, {y}, {z}, {w}) is not normalizable"
            )));
        }
        Ok(Self {
            x: x / norm,
            y: y / norm,
            z: z / norm,
            w: w / norm,
        })
    }

    pub fn identity() -> Self {
        Self {
            x: R::zero(),
            y: R::zero(),
            z: R::zero(),
            w: R::one(),
        }
    }

    /// Rotation of `angle` radians about a unit `axis`.
    pub fn from_axis_angle(axis: &Vec3<R>, angle: R) -> Self {
        let half = angle / real(2.0);
        let s = half.sin();
        Self {
            x: axis.x * s,
            y: axis.y * s,
            z: axis.z * s,
            w: half.cos(),
        }
    }

    pub fn norm(&self) -> R {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }

    pub fn dot(&self, other: &Self) -> R {
        self.x * other.x + self.y * other.y + self.z * other.z + self.w * other.w
    }

    fn neg(&self) -> Self {
        Self {
            x: -self.x,
            y: -self.y,
            z: -self.z,
            w: -self.w,
        }
    }

    /// Hamilton product `self * other` (apply `other` first, then `self`).
    pub fn mul(&self, other: &Self) -> Self {
        Self {
            w: self.w * other.w - self.x * other.x - self.y * other.y - self.z * other.z,
            x: self.w * other.x + self.x * other.w + self.y * other.z - self.z * other.y,
            y: self.w * other.y - self.x * other.z + self.y * other.w + self.z * other.x,
            z: self.w * other.z + self.x * other.y - self.y * other.x + self.z * other.w,
        }
    }

    /// Rotates a vector by this quaternion.
    pub fn rotate(&self, v: &Vec3<R>) -> Vec3<R> {
        // q v q* expanded via the cross-product form: v + 2w(u x v) + 2u x (u x v)
        let u = Vec3::new(self.x, self.y, self.z);
        let two = real::<R>(2.0);
        let uv = cross(&u, v);
        let uuv = cross(&u, &uv);
        v.add(&uv.scale(two * self.w)).add(&uuv.scale(two))
    }

    /// Spherical linear interpolation, exact at t = 0 and t = 1.
    ///
    /// Takes the shorter arc (flips sign when the dot product is negative)
    /// and falls back to normalized lerp for nearly parallel inputs.
    pub fn slerp(a: &Self, b: &Self, t: R) -> Self {
        if t == R::zero() {
            return *a;
        }
        if t == R::one() {
            return *b;
        }
        let mut b = *b;
        let mut dot = a.dot(&b);
        if dot < R::zero() {
            b = b.neg();
            dot = -dot;
        }
        let one = R::one();
        if dot > one - real(1e-9) {
            // Nearly parallel: nlerp avoids the 0/0 in the sin ratio.
            let blended = Self {
                x: a.x * (one - t) + b.x * t,
                y: a.y * (one - t) + b.y * t,
                z: a.z * (one - t) + b.z * t,
                w: a.w * (one - t) + b.w * t,
            };
            return Self::new(blended.x, blended.y, blended.z, blended.w).unwrap_or(*a);
        }
        let theta = dot.min(one).acos();
        let sin_theta = theta.sin();
        let wa = ((one - t) * theta).sin() / sin_theta;
        let wb = (t * theta).sin() / sin_theta;
        Self {
            x: a.x * wa + b.x * wb,
            y: a.y * wa + b.y * wb,
            z: a.z * wa + b.z * wb,
            w: a.w * wa + b.w * wb,
        }
    }
}

fn cross<R: Real>(a: &Vec3<R>, b: &Vec3<R>) -> Vec3<R> {
    Vec3::new(
        a.y * b.z - a.z * b.y,
        a.z * b.x - a.x * b.z,
        a.x * b.y - a.y * b.x,
    )
}

/// 6-DOF rigid-body pose: position in meters plus a unit quaternion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose<R> {
    pub position: Vec3<R>,
    pub orientation: UnitQuat<R>,
}

impl<R: Real> Pose<R> {
    /// Validates the pose invariants: finite position, unit quaternion.
    pub fn new(position: Vec3<R>, orientation: UnitQuat<R>) -> Result<Self> {
        if !position.is_finite() {
            return Err(Error::InvalidPose(format!(
                "non-finite position ({}, {}, {})",
                position.x, position.y, position.z
            )));
        }
        let norm_err = (orientation.norm() - R::one()).abs();
        if norm_err > real(QUAT_NORM_TOL) {
            return Err(Error::InvalidPose(format!(
                "quaternion norm off unit by {norm_err}"
            )));
        }
        Ok(Self {
            position,
            orientation,
        })
    }

    pub fn identity() -> Self {
        Self {
            position: Vec3::zero(),
            orientation: UnitQuat::identity(),
        }
    }

    pub fn from_position(position: Vec3<R>) -> Self {
        Self {
            position,
            orientation: UnitQuat::identity(),
        }
    }

    /// Linear position interpolation, spherical orientation interpolation.
    pub fn interpolate(a: &Self, b: &Self, t: R) -> Self {
        Self {
            position: Vec3::lerp(&a.position, &b.position, t),
            orientation: UnitQuat::slerp(&a.orientation, &b.orientation, t),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type V = Vec3<f64>;
    type Q = UnitQuat<f64>;

    #[test]
    fn distance_identity() {
        let o = V::zero();
        assert_eq!(euclidean_distance(&o, &o), 0.0);
    }

    #[test]
    fn distance_3_4_5() {
        let a = V::zero();
        let b = V::new(0.0, 3.0, 4.0);
        assert_eq!(euclidean_distance(&a, &b), 5.0);
    }

    #[test]
    fn distance_sqrt3() {
        let a = V::new(1.0, 1.0, 1.0);
        let b = V::new(2.0, 2.0, 2.0);
        assert!((euclidean_distance(&a, &b) - 3f64.sqrt()).abs() < 1e-12);
        assert!((euclidean_distance(&a, &b) - 1.7320508).abs() < 1e-7);
    }

    #[test]
    fn distance_symmetric() {
        let a = V::new(0.3, -1.2, 2.0);
        let b = V::new(-0.7, 0.4, 1.1);
        assert_eq!(euclidean_distance(&a, &b), euclidean_distance(&b, &a));
    }

    #[test]
    fn quat_rejects_zero_norm() {
        assert!(Q::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(Q::new(f64::NAN, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn quat_normalizes() {
        let q = Q::new(0.0, 0.0, 0.0, 2.0).unwrap();
        assert_eq!(q.w, 1.0);
    }

    #[test]
    fn rotate_quarter_turn_z() {
        let q = Q::from_axis_angle(&V::new(0.0, 0.0, 1.0), std::f64::consts::FRAC_PI_2);
        let v = q.rotate(&V::new(1.0, 0.0, 0.0));
        assert!((v.x).abs() < 1e-12);
        assert!((v.y - 1.0).abs() < 1e-12);
        assert!((v.z).abs() < 1e-12);
    }

    #[test]
    fn slerp_endpoints_exact() {
        let a = Q::from_axis_angle(&V::new(0.0, 1.0, 0.0), 0.3);
        let b = Q::from_axis_angle(&V::new(0.0, 1.0, 0.0), 1.1);
        assert_eq!(Q::slerp(&a, &b, 0.0), a);
        assert_eq!(Q::slerp(&a, &b, 1.0), b);
    }

    #[test]
    fn slerp_halfway_angle() {
        let axis = V::new(1.0, 0.0, 0.0);
        let a = Q::identity();
        let b = Q::from_axis_angle(&axis, 1.0);
        let mid = Q::slerp(&a, &b, 0.5);
        let expect = Q::from_axis_angle(&axis, 0.5);
        assert!((mid.dot(&expect).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pose_rejects_non_finite_position() {
        let p = V::new(f64::INFINITY, 0.0, 0.0);
        assert!(Pose::new(p, Q::identity()).is_err());
    }

    #[test]
    fn lerp_endpoints_exact() {
        let a = V::new(0.123456789, -4.2, 9.75);
        let b = V::new(7.5, 0.333, -2.25);
        assert_eq!(V::lerp(&a, &b, 0.0), a);
        assert_eq!(V::lerp(&a, &b, 1.0), b);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn vec3() -> impl Strategy<Value = V> {
            (-100.0..100.0f64, -100.0..100.0f64, -100.0..100.0f64)
                .prop_map(|(x, y, z)| V::new(x, y, z))
        }

        proptest! {
            #[test]
            fn triangle_inequality(a in vec3(), b in vec3(), c in vec3()) {
                let ab = euclidean_distance(&a, &b);
                let bc = euclidean_distance(&b, &c);
                let ac = euclidean_distance(&a, &c);
                prop_assert!(ac <= ab + bc + 1e-12);
            }

            #[test]
            fn distance_non_negative_and_symmetric(a in vec3(), b in vec3()) {
                let d = euclidean_distance(&a, &b);
                prop_assert!(d >= 0.0);
                prop_assert_eq!(d, euclidean_distance(&b, &a));
            }
        }
    }
}
