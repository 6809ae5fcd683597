//! Rigid camera poses and the SE(3) tangent parameterization used by the solvers.

use nalgebra::{Matrix3, Matrix4, UnitQuaternion, Vector3, Vector6};

/// Camera-to-world rigid transform. The camera looks down its local −z axis with +y up,
/// so the view matrix is the inverse of this transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidPose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    /// Renormalizes the quaternion so rounding drift cannot compound through chains of
    /// compositions.
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: UnitQuaternion::new_normalize(rotation.into_inner()),
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    /// Builds a pose from the seven TUM components `tx ty tz qx qy qz qw`.
    /// The quaternion is renormalized.
    pub fn from_components(c: [f64; 7]) -> Self {
        let q = nalgebra::Quaternion::new(c[6], c[3], c[4], c[5]);
        Self::new(
            UnitQuaternion::from_quaternion(q),
            Vector3::new(c[0], c[1], c[2]),
        )
    }

    /// `[tx, ty, tz, qx, qy, qz, qw]`
    pub fn components(&self) -> [f64; 7] {
        let q = self.rotation.quaternion();
        [
            self.translation.x,
            self.translation.y,
            self.translation.z,
            q.i,
            q.j,
            q.k,
            q.w,
        ]
    }

    /// Camera placed at `eye` whose −z axis points at `target`.
    /// Returns `None` when the viewing direction is undefined or parallel to `up`.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Option<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return None;
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-12 {
            return None;
        }
        let x = right.normalize();
        let z = -forward;
        let y = z.cross(&x);
        let r = Matrix3::from_columns(&[x, y, z]);
        let rotation =
            UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(r));
        Some(Self::new(rotation, eye))
    }

    pub fn inverse(&self) -> Self {
        let rotation = self.rotation.inverse();
        Self::new(rotation, -(rotation * self.translation))
    }

    /// `self ∘ other`
    pub fn compose(&self, other: &RigidPose) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Maps a world point into this camera's frame (applies the view transform).
    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse() * (p - self.translation)
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(self.rotation.to_rotation_matrix().matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// The view matrix `V`, i.e. the inverse of the camera-to-world transform.
    pub fn view_matrix(&self) -> Matrix4<f64> {
        self.inverse().to_matrix()
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        self.translation
    }

    /// Right perturbation `self · exp(delta)`.
    pub fn retract(&self, delta: &Se3Tangent) -> Self {
        self.compose(&delta.exp())
    }

    /// Linear interpolation of position and spherical interpolation of orientation.
    pub fn interpolate(&self, other: &RigidPose, s: f64) -> Self {
        let translation = self.translation.lerp(&other.translation, s);
        let rotation = self
            .rotation
            .try_slerp(&other.rotation, s, 1e-12)
            .unwrap_or(self.rotation);
        Self::new(rotation, translation)
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(|c| c.is_finite())
    }
}

/// Tangent vector of SE(3): rotation part first, then translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Se3Tangent(pub Vector6<f64>);

const SMALL_ANGLE: f64 = 1e-4;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

impl Se3Tangent {
    pub fn new(rotation: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self(Vector6::new(
            rotation.x,
            rotation.y,
            rotation.z,
            translation.x,
            translation.y,
            translation.z,
        ))
    }

    pub fn zero() -> Self {
        Self(Vector6::zeros())
    }

    pub fn rotation(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    /// Left Jacobian of SO(3), which maps the translational tangent to the translation.
    fn v_matrix(omega: &Vector3<f64>) -> Matrix3<f64> {
        let theta = omega.norm();
        let w = skew(omega);
        let w2 = w * w;
        let (a, b) = if theta < SMALL_ANGLE {
            let t2 = theta * theta;
            (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
        } else {
            let half = 0.5 * theta;
            let s = half.sin();
            (
                2.0 * s * s / (theta * theta),
                (theta - theta.sin()) / (theta * theta * theta),
            )
        };
        Matrix3::identity() + a * w + b * w2
    }

    fn v_inverse(omega: &Vector3<f64>) -> Matrix3<f64> {
        let theta = omega.norm();
        let w = skew(omega);
        let w2 = w * w;
        let c = if theta < SMALL_ANGLE {
            1.0 / 12.0 + theta * theta / 720.0
        } else {
            let half = 0.5 * theta;
            (1.0 - half * half.cos() / half.sin()) / (theta * theta)
        };
        Matrix3::identity() - 0.5 * w + c * w2
    }

    pub fn exp(&self) -> RigidPose {
        let omega = self.rotation();
        let rotation = UnitQuaternion::from_scaled_axis(omega);
        RigidPose::new(rotation, Self::v_matrix(&omega) * self.translation())
    }

    pub fn log(pose: &RigidPose) -> Self {
        let omega = pose.rotation.scaled_axis();
        let rho = Self::v_inverse(&omega) * pose.translation;
        Self::new(omega, rho)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn look_at_orbit_start_faces_minus_x() {
        let pose = RigidPose::look_at(
            Vector3::new(3.0, 0.0, 0.0),
            Vector3::zeros(),
            Vector3::y(),
        )
        .unwrap();
        let forward = pose.rotation * Vector3::new(0.0, 0.0, -1.0);
        assert_relative_eq!(forward, Vector3::new(-1.0, 0.0, 0.0), epsilon = 1e-12);
        let up = pose.rotation * Vector3::y();
        assert_relative_eq!(up, Vector3::y(), epsilon = 1e-12);
    }

    #[test]
    fn look_at_degenerate() {
        assert!(RigidPose::look_at(Vector3::zeros(), Vector3::zeros(), Vector3::y()).is_none());
        assert!(RigidPose::look_at(Vector3::zeros(), Vector3::y(), Vector3::y()).is_none());
    }

    #[test]
    fn view_matrix_inverts_pose() {
        let pose = Se3Tangent::new(Vector3::new(0.1, -0.3, 0.2), Vector3::new(1.0, 2.0, -3.0)).exp();
        let prod = pose.view_matrix() * pose.to_matrix();
        assert_relative_eq!(prod, Matrix4::identity(), epsilon = 1e-12);
    }

    #[test]
    fn small_angle_exp_matches_series() {
        let tiny = Se3Tangent::new(Vector3::new(1e-7, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0));
        let pose = tiny.exp();
        // V ≈ I + ½[ω]×, so the translation picks up ½·1e-7 along z.
        assert_relative_eq!(pose.translation.z, 0.5e-7, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn exp_log_round_trip(
            wx in -1.8f64..1.8, wy in -1.8f64..1.8, wz in -1.8f64..1.8,
            tx in -5.0f64..5.0, ty in -5.0f64..5.0, tz in -5.0f64..5.0,
        ) {
            let omega = Vector3::new(wx, wy, wz);
            prop_assume!(omega.norm() < std::f64::consts::PI - 1e-3);
            let xi = Se3Tangent::new(omega, Vector3::new(tx, ty, tz));
            let back = Se3Tangent::log(&xi.exp());
            prop_assert!((back.0 - xi.0).amax() < 1e-12);
        }

        #[test]
        fn inverse_composes_to_identity(
            wx in -3.0f64..3.0, wy in -3.0f64..3.0, wz in -3.0f64..3.0,
            tx in -5.0f64..5.0, ty in -5.0f64..5.0, tz in -5.0f64..5.0,
        ) {
            let pose = Se3Tangent::new(Vector3::new(wx, wy, wz), Vector3::new(tx, ty, tz)).exp();
            let id = pose.compose(&pose.inverse());
            prop_assert!(id.translation.norm() < 1e-12);
            prop_assert!(id.rotation.angle() < 1e-12);
        }
    }
}
