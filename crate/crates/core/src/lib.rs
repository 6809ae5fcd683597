//! Monocular SLAM over mesh vertices used as uniquely identified image features.
//!
//! Every vertex of a scene mesh carries a stable [`VertexId`]. Capturing a frame projects
//! the vertices through a pinhole camera and keeps those inside the depth gate and image;
//! association between frames is then exact, by ID. On top of that sit two-view
//! initialization, motion-only tracking, keyframe mapping with windowed bundle adjustment,
//! and trajectory evaluation.
//!
//! The `parallel` feature (on by default) spreads capture and factor evaluation over a
//! rayon pool. Without it the same code runs sequentially and produces identical output.

pub mod association;
pub mod evaluation;
pub mod fixtures;
pub mod geometry;
pub mod optimize;
pub mod pose;
pub mod projection;
pub mod slam;

pub use association::{match_frames, match_to_map, MatchPair};
pub use evaluation::{align_sim3, associate_by_timestamp, ate_rmse, AteReport, EvalError, Sim3, Trajectory};
pub use geometry::{generate_scene, load_mesh, MeshError, MeshFormat, MeshModel, SceneKind, SceneSpec, VertexId};
pub use pose::{RigidPose, Se3Tangent};
pub use projection::{
    back_project, capture_frame, capture_frame_into, capture_frame_sequential, perspective_matrix, project_vertex, CameraIntrinsics,
    CaptureConfig, FeatureFrame, ProjectionError, VertexFeature,
};
pub use slam::{SlamConfig, SlamMap, SlamSystem, TrackerMode, TrackerState};
