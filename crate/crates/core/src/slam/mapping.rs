//! Keyframe insertion: observation bookkeeping, triangulation of newly co-visible vertices
//! and the windowed bundle adjustment that follows.

use nalgebra::Vector2;

use super::map::{KeyFrameId, SlamMap};
use super::{SlamConfig, SlamError};
use crate::association::match_frames;
use crate::optimize::{parallax_deg, project_point, triangulate_dlt, WindowOutcome, WindowedBaReport};
use crate::pose::RigidPose;
use crate::projection::{CameraIntrinsics, FeatureFrame};

#[derive(Clone, Debug, PartialEq)]
pub struct MappingReport {
    pub keyframe: KeyFrameId,
    pub new_points: usize,
    pub rejected_parallax: usize,
    pub rejected_cheirality: usize,
    pub rejected_reprojection: usize,
    pub ba: Option<WindowedBaReport>,
}

/// Inserts `frame` as keyframe `kf_id` and triangulates every vertex it shares with the
/// previous keyframe that is not yet mapped.
pub fn triangulate_new_keyframe(
    kf_id: KeyFrameId,
    frame: FeatureFrame,
    pose: RigidPose,
    map: &mut SlamMap,
    cfg: &SlamConfig,
    intrinsics: &CameraIntrinsics,
) -> Result<MappingReport, SlamError> {
    let prev = map.last_keyframe().cloned();
    map.add_keyframe(kf_id, pose, frame)?;
    let mut report = MappingReport {
        keyframe: kf_id,
        new_points: 0,
        rejected_parallax: 0,
        rejected_cheirality: 0,
        rejected_reprojection: 0,
        ba: None,
    };
    let Some(prev) = prev else {
        return Ok(report);
    };
    let current = map.keyframe(kf_id).expect("just inserted").clone();
    let within = |pose: &RigidPose, p: &nalgebra::Vector3<f64>, o: &Vector2<f64>| {
        project_point(p, pose, intrinsics).is_some_and(|q| (q - o).norm() <= cfg.max_reproj_px)
    };
    for m in match_frames(&prev.frame, &current.frame) {
        if map.point(m.id).is_some() {
            continue;
        }
        let o1 = prev.frame.features()[m.index_a].pixel();
        let o2 = current.frame.features()[m.index_b].pixel();
        let Ok(t) = triangulate_dlt(&prev.pose, &current.pose, &o1, &o2, intrinsics) else {
            report.rejected_parallax += 1;
            continue;
        };
        if !t.in_front() {
            report.rejected_cheirality += 1;
            continue;
        }
        if parallax_deg(&t.point, &prev.pose.center(), &current.pose.center()) < cfg.min_triangulation_parallax_deg {
            report.rejected_parallax += 1;
            continue;
        }
        if !(within(&prev.pose, &t.point, &o1) && within(&current.pose, &t.point, &o2)) {
            report.rejected_reprojection += 1;
            continue;
        }
        map.add_point(m.id, t.point, &[(prev.id, o1), (current.id, o2)])?;
        report.new_points += 1;
    }
    Ok(report)
}

/// Full mapping step: keyframe insertion, triangulation and windowed BA over the last
/// `cfg.ba_window` keyframes. Returns the number of new map points.
pub fn insert_keyframe_and_map(
    kf_id: KeyFrameId,
    frame: FeatureFrame,
    pose: RigidPose,
    map: &mut SlamMap,
    cfg: &SlamConfig,
    intrinsics: &CameraIntrinsics,
) -> Result<MappingReport, SlamError> {
    let mut report = triangulate_new_keyframe(kf_id, frame, pose, map, cfg, intrinsics)?;
    let outcome = WindowOutcome::compute(map, cfg.ba_window, intrinsics, &cfg.lm);
    outcome.commit(map)?;
    report.ba = Some(outcome.report);
    Ok(report)
}
