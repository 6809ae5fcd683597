//! Monocular SLAM over vertex features: two-view initialization, frame tracking,
//! keyframe selection and mapping, plus the threaded tracking/mapping runtime.

mod init;
mod map;
mod mapping;
mod system;
mod tracking;

pub use init::{
    decompose_essential, essential_eight_point, essential_from_motion, initialize_two_view,
    try_initialize, InitRejection, RelativeMotion,
};
pub use map::{KeyFrame, KeyFrameId, MapError, MapPoint, MapSnapshot, SlamMap};
pub use mapping::{insert_keyframe_and_map, triangulate_new_keyframe, MappingReport};
pub use system::{FrameOutcome, MappingMode, SharedMap, SlamSystem};
pub use tracking::{need_keyframe, track_frame, TrackResult};

use thiserror::Error;

use crate::optimize::LmSettings;
use crate::pose::RigidPose;
use crate::projection::FeatureFrame;

#[derive(Debug, Error, PartialEq)]
pub enum SlamError {
    #[error("tracking requires an initialized map")]
    NotInitialized,
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("mapping thread is gone")]
    MappingDisconnected,
}

/// Thresholds for initialization, tracking, keyframing and mapping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlamConfig {
    pub min_init_matches: usize,
    pub min_init_parallax_deg: f64,
    pub min_tracked_points: usize,
    pub kf_tracked_ratio: f64,
    pub ba_window: usize,
    pub min_triangulation_parallax_deg: f64,
    pub max_reproj_px: f64,
    pub lm: LmSettings,
}

impl Default for SlamConfig {
    fn default() -> Self {
        Self {
            min_init_matches: 50,
            min_init_parallax_deg: 1.0,
            min_tracked_points: 20,
            kf_tracked_ratio: 0.9,
            ba_window: 5,
            min_triangulation_parallax_deg: 0.5,
            max_reproj_px: 1.0,
            lm: LmSettings::default(),
        }
    }
}

impl SlamConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("min_init_matches", self.min_init_matches as f64),
            ("min_init_parallax_deg", self.min_init_parallax_deg),
            ("min_tracked_points", self.min_tracked_points as f64),
            ("ba_window", self.ba_window as f64),
            ("min_triangulation_parallax_deg", self.min_triangulation_parallax_deg),
            ("max_reproj_px", self.max_reproj_px),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("slam.{name} must be positive"));
            }
        }
        if !(self.kf_tracked_ratio > 0.0 && self.kf_tracked_ratio <= 1.0) {
            return Err("slam.kf_tracked_ratio must lie in (0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrackerMode {
    Uninitialized,
    Tracking,
    Lost,
}

impl TrackerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackerMode::Uninitialized => "uninitialized",
            TrackerMode::Tracking => "tracking",
            TrackerMode::Lost => "lost",
        }
    }
}

/// State owned exclusively by the tracking context.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackerState {
    pub mode: TrackerMode,
    pub last_pose: RigidPose,
    /// `last_pose⁻¹ ∘ current` of the last two tracked frames.
    pub velocity: RigidPose,
    pub last_frame: Option<FeatureFrame>,
    /// Most recent keyframe requested by tracking (it may still be queued for mapping).
    pub last_keyframe: KeyFrameId,
    pub last_keyframe_pose: RigidPose,
    pub last_keyframe_points: usize,
}

impl Default for TrackerState {
    fn default() -> Self {
        Self {
            mode: TrackerMode::Uninitialized,
            last_pose: RigidPose::identity(),
            velocity: RigidPose::identity(),
            last_frame: None,
            last_keyframe: KeyFrameId(0),
            last_keyframe_pose: RigidPose::identity(),
            last_keyframe_points: 0,
        }
    }
}
