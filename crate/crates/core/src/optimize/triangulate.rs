//! Linear (DLT) two-view triangulation.

use nalgebra::{Matrix4, RowVector4, Vector2, Vector3};

use crate::pose::RigidPose;
use crate::projection::CameraIntrinsics;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangulated {
    pub point: Vector3<f64>,
    /// View-space depth (positive in front) in each camera.
    pub depth1: f64,
    pub depth2: f64,
}

impl Triangulated {
    pub fn in_front(&self) -> bool {
        self.depth1 > 0.0 && self.depth2 > 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Degenerate {
    ZeroBaseline,
    PointAtInfinity,
}

fn rows(pose: &RigidPose, n: &Vector2<f64>) -> [RowVector4<f64>; 2] {
    let view = pose.inverse().to_matrix();
    let r1 = view.row(0).into_owned();
    let r2 = view.row(1).into_owned();
    let r3 = view.row(2).into_owned();
    // x_n·(−z_c) − x_c = 0 and y_n·(−z_c) − y_c = 0
    let a = -(r3 * n.x + r1);
    let b = -(r3 * n.y + r2);
    [a / a.norm(), b / b.norm()]
}

/// Triangulates pixel observations `obs1`, `obs2` from two camera-to-world poses.
pub fn triangulate_dlt(
    pose1: &RigidPose,
    pose2: &RigidPose,
    obs1: &Vector2<f64>,
    obs2: &Vector2<f64>,
    intrinsics: &CameraIntrinsics,
) -> Result<Triangulated, Degenerate> {
    let n1 = intrinsics.normalize(obs1);
    let n2 = intrinsics.normalize(obs2);
    triangulate_normalized(pose1, pose2, &n1, &n2)
}

/// Same as [`triangulate_dlt`] on normalized image coordinates `(x/d, y/d)`.
pub fn triangulate_normalized(
    pose1: &RigidPose,
    pose2: &RigidPose,
    n1: &Vector2<f64>,
    n2: &Vector2<f64>,
) -> Result<Triangulated, Degenerate> {
    let baseline = (pose1.center() - pose2.center()).norm();
    let scale = 1.0 + pose1.center().norm().max(pose2.center().norm());
    if baseline <= 1e-12 * scale {
        return Err(Degenerate::ZeroBaseline);
    }
    let [a0, a1] = rows(pose1, n1);
    let [b0, b1] = rows(pose2, n2);
    let a = Matrix4::from_rows(&[a0, a1, b0, b1]);
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("4 singular values");
    let h = v_t.row(imin);
    if h[3].abs() < 1e-12 {
        return Err(Degenerate::PointAtInfinity);
    }
    let point = Vector3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]);
    Ok(Triangulated {
        point,
        depth1: -pose1.world_to_camera(&point).z,
        depth2: -pose2.world_to_camera(&point).z,
    })
}

/// Angle in degrees subtended at `point` by the two camera centers.
pub fn parallax_deg(point: &Vector3<f64>, c1: &Vector3<f64>, c2: &Vector3<f64>) -> f64 {
    let a = c1 - point;
    let b = c2 - point;
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (a.dot(&b) / denom).clamp(-1.0, 1.0).acos().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::project_point;

    fn cam(x: f64) -> RigidPose {
        RigidPose::from_translation(Vector3::new(x, 0.0, 3.0))
    }

    #[test]
    fn origin_from_symmetric_pair() {
        let k = CameraIntrinsics::default();
        let (p1, p2) = (cam(-0.5), cam(0.5));
        let x = Vector3::zeros();
        let o1 = project_point(&x, &p1, &k).unwrap();
        let o2 = project_point(&x, &p2, &k).unwrap();
        let t = triangulate_dlt(&p1, &p2, &o1, &o2, &k).unwrap();
        assert!(t.point.norm() < 1e-9);
        assert!((t.depth1 - 3.0).abs() < 1e-9 && (t.depth2 - 3.0).abs() < 1e-9);
    }

    #[test]
    fn identical_poses_degenerate() {
        let k = CameraIntrinsics::default();
        let o = Vector2::new(500.0, 500.0);
        assert_eq!(
            triangulate_dlt(&cam(0.0), &cam(0.0), &o, &o, &k),
            Err(Degenerate::ZeroBaseline)
        );
    }

    #[test]
    fn parallel_rays_are_at_infinity() {
        let k = CameraIntrinsics::default();
        let o = Vector2::new(512.0, 512.0);
        assert_eq!(
            triangulate_dlt(&cam(-0.5), &cam(0.5), &o, &o, &k),
            Err(Degenerate::PointAtInfinity)
        );
    }

    #[test]
    fn parallax_of_symmetric_pair() {
        let a = parallax_deg(&Vector3::zeros(), &Vector3::new(-1.0, 0.0, 1.0), &Vector3::new(1.0, 0.0, 1.0));
        assert!((a - 90.0).abs() < 1e-12);
    }
}
