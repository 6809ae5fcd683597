//! Pixel reprojection residuals and their analytic Jacobians.

use nalgebra::{Matrix2x3, Matrix2x6, Matrix3, Vector2, Vector3};

use crate::pose::{skew, RigidPose};
use crate::projection::CameraIntrinsics;

/// Points closer than this to the image plane are treated as behind the camera.
pub const MIN_DEPTH: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reprojection {
    /// predicted − measured, pixels
    pub residual: Vector2<f64>,
    /// w.r.t. the right-perturbation tangent (rotation, translation) of the camera-to-world pose
    pub d_pose: Matrix2x6<f64>,
    pub d_point: Matrix2x3<f64>,
}

/// Pixel position of a world point, without any culling. `None` behind the camera.
pub fn project_point(point: &Vector3<f64>, pose: &RigidPose, intrinsics: &CameraIntrinsics) -> Option<Vector2<f64>> {
    let pc = pose.world_to_camera(point);
    let depth = -pc.z;
    if depth <= MIN_DEPTH {
        return None;
    }
    Some(pixel_of(&pc, intrinsics))
}

#[inline]
fn pixel_of(pc: &Vector3<f64>, intrinsics: &CameraIntrinsics) -> Vector2<f64> {
    let (fx, fy) = intrinsics.focal_px();
    let (cx, cy) = intrinsics.principal_point();
    let d = -pc.z;
    Vector2::new(cx + fx * pc.x / d, cy - fy * pc.y / d)
}

/// Residual and Jacobians of one observation. `None` when the point is at or behind the
/// camera, in which case the factor is dropped for this evaluation.
pub fn reprojection_residual(
    point: &Vector3<f64>,
    pose: &RigidPose,
    intrinsics: &CameraIntrinsics,
    measurement: &Vector2<f64>,
) -> Option<Reprojection> {
    let r_cw: Matrix3<f64> = pose.rotation.inverse().to_rotation_matrix().into_inner();
    let pc = r_cw * (point - pose.translation);
    let d = -pc.z;
    if d <= MIN_DEPTH {
        return None;
    }
    let (fx, fy) = intrinsics.focal_px();
    let residual = pixel_of(&pc, intrinsics) - measurement;

    // d(u,v)/d(p_cam); v carries the image-row flip.
    let inv_d = 1.0 / d;
    let inv_d2 = inv_d * inv_d;
    let d_proj = Matrix2x3::new(
        fx * inv_d,
        0.0,
        fx * pc.x * inv_d2,
        0.0,
        -fy * inv_d,
        -fy * pc.y * inv_d2,
    );
    // p_cam' = exp(-δ)·p_cam to first order: [p_cam]× ω − ρ
    let mut d_pc_d_pose = nalgebra::Matrix3x6::zeros();
    d_pc_d_pose.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&pc));
    d_pc_d_pose
        .fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(-Matrix3::identity()));

    Some(Reprojection {
        residual,
        d_pose: d_proj * d_pc_d_pose,
        d_point: d_proj * r_cw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Se3Tangent;

    #[test]
    fn exact_measurement_gives_zero_residual() {
        let k = CameraIntrinsics::default();
        let pose = Se3Tangent::new(Vector3::new(0.1, 0.2, -0.1), Vector3::new(0.3, 0.0, 1.0)).exp();
        let p = pose.transform_point(&Vector3::new(0.2, -0.1, -2.0));
        let m = project_point(&p, &pose, &k).unwrap();
        let r = reprojection_residual(&p, &pose, &k, &m).unwrap();
        assert!(r.residual.norm() < 1e-9);
    }

    #[test]
    fn behind_camera_is_invalid() {
        let k = CameraIntrinsics::default();
        let p = Vector3::new(0.0, 0.0, 1.0);
        assert!(reprojection_residual(&p, &RigidPose::identity(), &k, &Vector2::zeros()).is_none());
        assert!(project_point(&p, &RigidPose::identity(), &k).is_none());
    }
}
