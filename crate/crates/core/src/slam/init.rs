//! Two-view map initialization from ID matches: normalized eight-point essential matrix,
//! cheirality-based pose selection, parallax gate and median-depth scale anchor.

use nalgebra::{DMatrix, Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};

use super::map::{KeyFrameId, SlamMap};
use super::{SlamConfig, TrackerMode, TrackerState};
use crate::association::match_frames;
use crate::optimize::{parallax_deg, project_point, triangulate_normalized};
use crate::pose::{skew, RigidPose};
use crate::projection::{CameraIntrinsics, FeatureFrame};

/// Relative motion `p₂ = R·p₁ + t` between two camera frames.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativeMotion {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl RelativeMotion {
    /// Camera-to-world pose of the second camera when the first sits at the origin.
    pub fn second_camera_pose(&self) -> RigidPose {
        let r_inv = self.rotation.inverse();
        RigidPose::new(
            UnitQuaternion::from_rotation_matrix(&r_inv),
            -(r_inv * self.translation),
        )
    }
}

/// Rays in the camera frame for normalized image points; the camera looks down −z.
fn ray(n: &Vector2<f64>) -> Vector3<f64> {
    Vector3::new(n.x, n.y, -1.0)
}

/// Hartley normalization acting on rays `(x, y, −1)`.
fn normalizer(points: &[Vector2<f64>]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vector2<f64>>() / n;
    let spread = points.iter().map(|p| (p - mean).norm()).sum::<f64>() / n;
    let s = if spread > 0.0 { std::f64::consts::SQRT_2 / spread } else { 1.0 };
    Matrix3::new(s, 0.0, s * mean.x, 0.0, s, s * mean.y, 0.0, 0.0, 1.0)
}

/// Essential matrix from ≥ 8 normalized correspondences, or `None` if the linear system
/// is rank-deficient (e.g. all points coplanar with no noise).
pub fn essential_eight_point(n1: &[Vector2<f64>], n2: &[Vector2<f64>]) -> Option<Matrix3<f64>> {
    let m = n1.len();
    if m < 8 || n2.len() != m {
        return None;
    }
    let t1 = normalizer(n1);
    let t2 = normalizer(n2);
    // At least 9 rows so the SVD exposes the full right null space.
    let mut a = DMatrix::zeros(m.max(9), 9);
    for i in 0..m {
        let x1 = t1 * ray(&n1[i]);
        let x2 = t2 * ray(&n2[i]);
        for r in 0..3 {
            for c in 0..3 {
                a[(i, 3 * r + c)] = x2[r] * x1[c];
            }
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let largest = sv[order[0]];
    // A second (near-)null direction means the correspondences do not pin E down.
    if sv[order[7]] <= 1e-10 * largest {
        return None;
    }
    let e_row = v_t.row(order[8]);
    let e_tilde = Matrix3::from_fn(|r, c| e_row[3 * r + c]);
    let e = t2.transpose() * e_tilde * t1;
    // Project onto the essential manifold: two equal singular values, one zero.
    let svd = e.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let s = 0.5 * (svd.singular_values[0] + svd.singular_values[1]);
    let mut sorted = svd.singular_values;
    sorted[0] = s;
    sorted[1] = s;
    sorted[2] = 0.0;
    Some(u * Matrix3::from_diagonal(&sorted) * v_t)
}

/// The four `(R, t)` factorizations of an essential matrix; `t` has unit norm.
pub fn decompose_essential(e: &Matrix3<f64>) -> [RelativeMotion; 4] {
    let svd = e.svd(true, true);
    let mut u = svd.u.expect("requested U");
    let mut v_t = svd.v_t.expect("requested V");
    // nalgebra does not sort; put the null direction last.
    let sv = svd.singular_values;
    let zero_idx = (0..3).min_by(|&i, &j| sv[i].total_cmp(&sv[j])).expect("3 values");
    if zero_idx != 2 {
        u.swap_columns(zero_idx, 2);
        v_t.swap_rows(zero_idx, 2);
    }
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v_t.determinant() < 0.0 {
        v_t = -v_t;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    // Round-trip through a unit quaternion to remove rounding drift from orthogonality.
    let clean = |m: Matrix3<f64>| {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m)).to_rotation_matrix()
    };
    let r1 = clean(u * w * v_t);
    let r2 = clean(u * w.transpose() * v_t);
    let t = u.column(2).into_owned();
    [
        RelativeMotion { rotation: r1, translation: t },
        RelativeMotion { rotation: r1, translation: -t },
        RelativeMotion { rotation: r2, translation: t },
        RelativeMotion { rotation: r2, translation: -t },
    ]
}

/// Essential matrix implied by a relative motion, `[t]× R`.
pub fn essential_from_motion(m: &RelativeMotion) -> Matrix3<f64> {
    skew(&m.translation) * m.rotation.matrix()
}

/// Why an initialization attempt was rejected.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitRejection {
    TooFewMatches,
    Degenerate,
    Cheirality,
    LowParallax,
    TooFewPoints,
}

/// Attempts a two-view initialization. Returns the map (keyframe 0 at the identity,
/// keyframe 1 at the recovered pose, median depth in the first view scaled to 1) and a
/// tracker positioned at the second frame.
pub fn try_initialize(
    f1: &FeatureFrame,
    f2: &FeatureFrame,
    intrinsics: &CameraIntrinsics,
    cfg: &SlamConfig,
) -> Option<(SlamMap, TrackerState)> {
    initialize_two_view(f1, f2, intrinsics, cfg).ok()
}

pub fn initialize_two_view(
    f1: &FeatureFrame,
    f2: &FeatureFrame,
    intrinsics: &CameraIntrinsics,
    cfg: &SlamConfig,
) -> Result<(SlamMap, TrackerState), InitRejection> {
    let matches = match_frames(f1, f2);
    if matches.len() < cfg.min_init_matches.max(8) {
        return Err(InitRejection::TooFewMatches);
    }
    let obs1: Vec<Vector2<f64>> = matches.iter().map(|m| f1.features()[m.index_a].pixel()).collect();
    let obs2: Vec<Vector2<f64>> = matches.iter().map(|m| f2.features()[m.index_b].pixel()).collect();
    let n1: Vec<Vector2<f64>> = obs1.iter().map(|p| intrinsics.normalize(p)).collect();
    let n2: Vec<Vector2<f64>> = obs2.iter().map(|p| intrinsics.normalize(p)).collect();

    let e = essential_eight_point(&n1, &n2).ok_or(InitRejection::Degenerate)?;
    let origin = RigidPose::identity();

    // Pick the factorization that puts the most points in front of both cameras.
    let mut best: Option<(usize, RelativeMotion, Vec<Option<(Vector3<f64>, f64)>>)> = None;
    for cand in decompose_essential(&e) {
        let pose2 = cand.second_camera_pose();
        let tri: Vec<Option<(Vector3<f64>, f64)>> = n1
            .iter()
            .zip(&n2)
            .map(|(a, b)| {
                triangulate_normalized(&origin, &pose2, a, b)
                    .ok()
                    .filter(|t| t.in_front())
                    .map(|t| (t.point, t.depth1))
            })
            .collect();
        let count = tri.iter().flatten().count();
        if best.as_ref().is_none_or(|(c, _, _)| count > *c) {
            best = Some((count, cand, tri));
        }
    }
    let (count, motion, tri) = best.expect("four candidates");
    if (count as f64) < 0.9 * matches.len() as f64 {
        return Err(InitRejection::Cheirality);
    }
    let pose2_unit = motion.second_camera_pose();

    let mut parallaxes: Vec<f64> = tri
        .iter()
        .flatten()
        .map(|(p, _)| parallax_deg(p, &origin.center(), &pose2_unit.center()))
        .collect();
    parallaxes.sort_by(f64::total_cmp);
    let median_parallax = parallaxes[parallaxes.len() / 2];
    if median_parallax < cfg.min_init_parallax_deg {
        return Err(InitRejection::LowParallax);
    }

    let mut depths: Vec<f64> = tri.iter().flatten().map(|(_, d)| *d).collect();
    depths.sort_by(f64::total_cmp);
    let median_depth = depths[depths.len() / 2];
    let scale = 1.0 / median_depth;
    let pose2 = RigidPose::new(pose2_unit.rotation, pose2_unit.translation * scale);

    let mut map = SlamMap::new();
    let (kf0, kf1) = (KeyFrameId(0), KeyFrameId(1));
    map.add_keyframe(kf0, origin, f1.clone()).expect("empty map");
    map.add_keyframe(kf1, pose2, f2.clone()).expect("newer keyframe");
    let mut added = 0;
    for ((m, t), (o1, o2)) in matches.iter().zip(&tri).zip(obs1.iter().zip(&obs2)) {
        let Some((p, _)) = t else { continue };
        let p = p * scale;
        if parallax_deg(&p, &origin.center(), &pose2.center()) < cfg.min_triangulation_parallax_deg {
            continue;
        }
        let ok = |pose: &RigidPose, o: &Vector2<f64>| {
            project_point(&p, pose, intrinsics).is_some_and(|q| (q - o).norm() <= cfg.max_reproj_px)
        };
        if ok(&origin, o1) && ok(&pose2, o2) {
            map.add_point(m.id, p, &[(kf0, *o1), (kf1, *o2)]).expect("fresh id");
            added += 1;
        }
    }
    if added < cfg.min_init_matches.min(matches.len()) / 2 || added < cfg.min_tracked_points {
        return Err(InitRejection::TooFewPoints);
    }
    let state = TrackerState {
        mode: TrackerMode::Tracking,
        last_pose: pose2,
        velocity: RigidPose::identity(),
        last_frame: Some(f2.clone()),
        last_keyframe: kf1,
        last_keyframe_pose: pose2,
        last_keyframe_points: map.num_points_seen_by(kf1),
    };
    Ok((map, state))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decomposition_contains_true_motion() {
        let truth = RelativeMotion {
            rotation: Rotation3::from_scaled_axis(Vector3::new(0.1, -0.2, 0.05)),
            translation: Vector3::new(0.3, -0.1, 0.2).normalize(),
        };
        let e = essential_from_motion(&truth);
        let found = decompose_essential(&e).iter().any(|m| {
            m.rotation.angle_to(&truth.rotation) < 1e-9 && (m.translation - truth.translation).norm() < 1e-9
        });
        assert!(found);
    }

    #[test]
    fn second_camera_pose_is_consistent() {
        let m = RelativeMotion {
            rotation: Rotation3::from_scaled_axis(Vector3::new(0.0, 0.3, 0.0)),
            translation: Vector3::new(0.1, 0.0, 0.0),
        };
        let pose = m.second_camera_pose();
        let p1 = Vector3::new(0.2, 0.1, -2.0);
        let p2 = m.rotation * p1 + m.translation;
        assert!((pose.world_to_camera(&p1) - p2).norm() < 1e-12);
    }
}
