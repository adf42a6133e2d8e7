//! Rigid transforms on SE(3) with an SO(3)×R³ tangent parameterization.
//!
//! Tangent vectors are ordered `[ω, v]`: rotation (rad) first, translation (m)
//! second. `exp` maps a tangent vector to `(Exp(ω), v)`; perturbations of a
//! pose are applied on the right, `x ∘ exp(ξ) = (R·Exp(ω), t + R·v)`.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix6, Quaternion, UnitQuaternion, Vector3, Vector6};

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;

/// Distance from π below which `log` refuses to pick an axis.
const CUT_LOCUS_TOL: f64 = 1e-9;

/// Six-dimensional tangent vector `[ω (rad), v (m)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tangent6(pub Vector6<f64>);

impl Tangent6 {
    pub fn zeros() -> Self {
        Self(Vector6::zeros())
    }

    pub fn new(rot: Vector3<f64>, trans: Vector3<f64>) -> Self {
        Self(Vector6::new(rot.x, rot.y, rot.z, trans.x, trans.y, trans.z))
    }

    pub fn from_slice(v: &[f64; 6]) -> Self {
        Self(Vector6::from_column_slice(v))
    }

    pub fn rot(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn trans(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0 * s)
    }
}

/// A rigid transform. The quaternion is kept canonical (`w ≥ 0`).
#[derive(Clone, Copy, PartialEq)]
pub struct Pose6 {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl fmt::Debug for Pose6 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.rotation.quaternion();
        write!(
            f,
            "Pose6(t=[{:.6}, {:.6}, {:.6}], q=[{:.6}, {:.6}, {:.6}, {:.6}])",
            self.translation.x, self.translation.y, self.translation.z, q.i, q.j, q.k, q.w
        )
    }
}

impl Default for Pose6 {
    fn default() -> Self {
        Self::identity()
    }
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

impl Pose6 {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: canonical(rotation),
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    /// Builds a pose from a rotation matrix, re-orthonormalizing it.
    pub fn from_matrix(r: &Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let rot = nalgebra::Rotation3::from_matrix(r);
        Self::new(UnitQuaternion::from_rotation_matrix(&rot), translation)
    }

    /// `(qx, qy, qz, qw)` order, as in the trajectory file format.
    pub fn from_xyzw(t: [f64; 3], q: [f64; 4]) -> Result<Self> {
        let quat = Quaternion::new(q[3], q[0], q[1], q[2]);
        let n = quat.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::InvalidInput(format!("quaternion {q:?} has zero norm")));
        }
        Ok(Self::new(
            UnitQuaternion::new_normalize(quat),
            Vector3::new(t[0], t[1], t[2]),
        ))
    }

    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        Self::new(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            translation,
        )
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

    pub fn quat_xyzw(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.i, q.j, q.k, q.w]
    }

    pub fn compose(&self, other: &Pose6) -> Pose6 {
        Pose6::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose6 {
        let inv = self.rotation.inverse();
        Pose6::new(inv, -(inv * self.translation))
    }

    /// `self⁻¹ ∘ other`, the transform of `other` expressed in `self`'s frame.
    pub fn between(&self, other: &Pose6) -> Pose6 {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        so3_angle(&self.rotation)
    }

    /// Heading of the body x-axis projected onto the horizontal plane.
    pub fn yaw(&self) -> f64 {
        let r = self.rotation_matrix();
        r[(1, 0)].atan2(r[(0, 0)])
    }

    pub fn exp(v: &Tangent6) -> Pose6 {
        Pose6::new(so3_exp(&v.rot()), v.trans())
    }

    pub fn log(&self) -> Result<Tangent6> {
        Ok(Tangent6::new(so3_log(&self.rotation)?, self.translation))
    }

    /// Right retraction `self ∘ exp(δ)`.
    pub fn retract(&self, delta: &Tangent6) -> Pose6 {
        self.compose(&Pose6::exp(delta))
    }

    /// Local coordinates of `other` around `self`: `log(self⁻¹ ∘ other)`.
    pub fn local(&self, other: &Pose6) -> Result<Tangent6> {
        self.between(other).log()
    }

    /// Maps a right perturbation of `self` to the equivalent right
    /// perturbation of `self ∘ b`, to first order:
    /// `(self ∘ exp(ξ)) ∘ b = (self ∘ b) ∘ exp(A ξ)`.
    pub fn perturbation_transfer(b: &Pose6) -> Matrix6<f64> {
        let rt = b.rotation_matrix().transpose();
        let mut a = Matrix6::zeros();
        a.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
        a.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(-rt * hat(&b.translation)));
        a.fixed_view_mut::<3, 3>(3, 3).copy_from(&rt);
        a
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
    }

    /// Rotation angle (rad) and translation distance between two poses.
    pub fn error_to(&self, other: &Pose6) -> (f64, f64) {
        let d = self.between(other);
        (d.angle(), (self.translation - other.translation).norm())
    }
}

impl Mul for Pose6 {
    type Output = Pose6;
    fn mul(self, rhs: Pose6) -> Pose6 {
        self.compose(&rhs)
    }
}

impl Mul for &Pose6 {
    type Output = Pose6;
    fn mul(self, rhs: &Pose6) -> Pose6 {
        self.compose(rhs)
    }
}

pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn so3_exp(w: &Vector3<f64>) -> UnitQuaternion<f64> {
    let theta = w.norm();
    let half = 0.5 * theta;
    let (s, c) = if theta < 1e-8 {
        // sin(θ/2)/θ ≈ 1/2 − θ²/48
        (0.5 - theta * theta / 48.0, 1.0 - theta * theta / 8.0)
    } else {
        (half.sin() / theta, half.cos())
    };
    let q = Quaternion::new(c, s * w.x, s * w.y, s * w.z);
    canonical(UnitQuaternion::new_normalize(q))
}

pub fn so3_angle(q: &UnitQuaternion<f64>) -> f64 {
    let w = q.w.abs();
    let n = q.imag().norm();
    2.0 * n.atan2(w)
}

pub fn so3_log(q: &UnitQuaternion<f64>) -> Result<Vector3<f64>> {
    let q = canonical(*q);
    let v = q.imag();
    let n = v.norm();
    let w = q.w;
    let angle = 2.0 * n.atan2(w);
    if std::f64::consts::PI - angle < CUT_LOCUS_TOL {
        return Err(Error::DegenerateRotation(angle));
    }
    if n < 1e-10 {
        // 2·atan(n/w)/n ≈ 2/w·(1 − n²/(3w²))
        Ok(v * (2.0 / w) * (1.0 - n * n / (3.0 * w * w)))
    } else {
        Ok(v * (angle / n))
    }
}

/// Inverse of the SO(3) right Jacobian.
pub fn so3_right_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = hat(phi);
    let coeff = if theta < 1e-5 {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    Matrix3::identity() + 0.5 * k + coeff * k * k
}
