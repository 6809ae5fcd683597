//! Per-frame pose tracking against the map and the keyframe decision.

use nalgebra::{Vector2, Vector3};

use super::map::SlamMap;
use super::{SlamConfig, SlamError, TrackerMode, TrackerState};
use crate::association::match_to_map;
use crate::optimize::{motion_only_ba, project_point};
use crate::pose::RigidPose;
use crate::projection::{CameraIntrinsics, FeatureFrame};

#[derive(Clone, Debug, PartialEq)]
pub struct TrackResult {
    pub pose: RigidPose,
    /// Map points that project in front of the camera and inside the image after refinement.
    pub n_tracked: usize,
    /// Features paired with a map point by ID.
    pub n_matched: usize,
    /// Features whose ID has no map point yet.
    pub n_unmapped: usize,
    /// Median distance from the camera to the tracked points.
    pub median_depth: f64,
    pub lost: bool,
}

/// Estimates the pose of `frame`: constant-velocity prediction, ID association with the
/// map, then motion-only bundle adjustment. A frame that cannot be tracked marks the
/// tracker lost and leaves the last pose untouched.
pub fn track_frame(
    frame: &FeatureFrame,
    map: &SlamMap,
    state: &mut TrackerState,
    intrinsics: &CameraIntrinsics,
    cfg: &SlamConfig,
) -> Result<TrackResult, SlamError> {
    if state.mode == TrackerMode::Uninitialized {
        return Err(SlamError::NotInitialized);
    }
    let predicted = state.last_pose.compose(&state.velocity);
    let matched = match_to_map(frame, map);
    let pairs: Vec<(Vector3<f64>, Vector2<f64>)> = matched
        .iter()
        .map(|(i, id)| {
            let p = map.point(*id).expect("matched id is mapped").position;
            (p, frame.features()[*i].pixel())
        })
        .collect();
    let n_unmapped = frame.len() - matched.len();

    let lost_result = |state: &mut TrackerState| {
        state.mode = TrackerMode::Lost;
        TrackResult {
            pose: state.last_pose,
            n_tracked: 0,
            n_matched: pairs.len(),
            n_unmapped,
            median_depth: 0.0,
            lost: true,
        }
    };
    if state.mode == TrackerMode::Lost {
        return Ok(lost_result(state));
    }

    let pose = match motion_only_ba(&predicted, &pairs, intrinsics, &cfg.lm) {
        Ok((pose, _)) => pose,
        Err(_) => return Ok(lost_result(state)),
    };
    let mut depths: Vec<f64> = pairs
        .iter()
        .filter(|(p, _)| {
            project_point(p, &pose, intrinsics).is_some_and(|q| intrinsics.contains(q.x, q.y))
        })
        .map(|(p, _)| (p - pose.center()).norm())
        .collect();
    let n_tracked = depths.len();
    if n_tracked < cfg.min_tracked_points {
        return Ok(lost_result(state));
    }
    depths.sort_by(f64::total_cmp);
    let median_depth = depths[depths.len() / 2];

    state.velocity = state.last_pose.inverse().compose(&pose);
    state.last_pose = pose;
    state.last_frame = Some(frame.clone());
    Ok(TrackResult {
        pose,
        n_tracked,
        n_matched: pairs.len(),
        n_unmapped,
        median_depth,
        lost: false,
    })
}

/// Keyframe policy. A new keyframe is needed when tracking has thinned out relative to
/// the last keyframe, or when enough unmapped vertices are in view and the camera has
/// moved far enough from the last keyframe for them to be triangulated.
pub fn need_keyframe(result: &TrackResult, map: &SlamMap, state: &TrackerState, cfg: &SlamConfig) -> bool {
    if result.lost {
        return false;
    }
    let reference = match map.keyframe(state.last_keyframe) {
        Some(_) => map.num_points_seen_by(state.last_keyframe),
        None => state.last_keyframe_points,
    };
    if (result.n_tracked as f64) < cfg.kf_tracked_ratio * reference as f64 {
        return true;
    }
    if result.n_unmapped >= cfg.min_init_matches {
        let baseline = (result.pose.center() - state.last_keyframe_pose.center()).norm();
        let expected_parallax = if result.median_depth > 0.0 {
            (baseline / result.median_depth).atan().to_degrees()
        } else {
            0.0
        };
        return expected_parallax >= cfg.min_triangulation_parallax_deg;
    }
    false
}
