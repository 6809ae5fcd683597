//! Vertex capture: the model-view-projection pipeline that turns mesh vertices into
//! identified image features.
//!
//! Conventions follow OpenGL: the camera looks down −z, clip space is the symmetric
//! frustum with depth in [−1, 1], and the image origin is the top-left corner, hence the
//! sign flip on `y` when mapping NDC to pixels.

use nalgebra::{Matrix4, Vector2, Vector3, Vector4};
use thiserror::Error;

use crate::geometry::{MeshModel, VertexId};
use crate::pose::RigidPose;

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("invalid intrinsics: {0}")]
    Intrinsics(&'static str),
    #[error("invalid capture config: {0}")]
    Capture(&'static str),
    #[error("feature ids must be strictly increasing (id {0} repeated or out of order)")]
    UnsortedIds(VertexId),
}

/// Pinhole camera described the way a rasterizer sees it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub fov_y_deg: f64,
    pub width_px: u32,
    pub height_px: u32,
    pub near: f64,
    pub far: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            fov_y_deg: 90.0,
            width_px: 1024,
            height_px: 1024,
            near: 0.1,
            far: 100.0,
        }
    }
}

impl CameraIntrinsics {
    pub fn new(fov_y_deg: f64, width_px: u32, height_px: u32, near: f64, far: f64) -> Result<Self, ProjectionError> {
        let k = Self {
            fov_y_deg,
            width_px,
            height_px,
            near,
            far,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), ProjectionError> {
        if !(self.fov_y_deg > 0.0 && self.fov_y_deg < 180.0) {
            return Err(ProjectionError::Intrinsics("fov_y_deg must lie in (0, 180)"));
        }
        if !(self.near > 0.0 && self.near < self.far && self.far.is_finite()) {
            return Err(ProjectionError::Intrinsics("require 0 < near < far"));
        }
        if self.width_px == 0 || self.height_px == 0 {
            return Err(ProjectionError::Intrinsics("image size must be ≥ 1 px"));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.width_px as f64
    }

    pub fn height(&self) -> f64 {
        self.height_px as f64
    }

    pub fn aspect(&self) -> f64 {
        self.width() / self.height()
    }

    /// `1 / tan(fov_y / 2)`
    pub fn focal_ndc(&self) -> f64 {
        1.0 / (0.5 * self.fov_y_deg.to_radians()).tan()
    }

    /// Focal lengths in pixels implied by the viewport mapping. With a square-pixel
    /// aspect they coincide.
    pub fn focal_px(&self) -> (f64, f64) {
        let f = self.focal_ndc();
        (
            0.5 * self.width() * f / self.aspect(),
            0.5 * self.height() * f,
        )
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (0.5 * self.width(), 0.5 * self.height())
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        (0.0..=self.width()).contains(&u) && (0.0..=self.height()).contains(&v)
    }

    /// Pixel to the normalized image plane, `(x/d, y/d)` with `d = −z_view`.
    pub fn normalize(&self, px: &Vector2<f64>) -> Vector2<f64> {
        let (fx, fy) = self.focal_px();
        let (cx, cy) = self.principal_point();
        Vector2::new((px.x - cx) / fx, (cy - px.y) / fy)
    }
}

/// Depth gate and image-bounds culling applied during capture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaptureConfig {
    pub z_min: f64,
    pub z_max: f64,
    pub cull_outside_image: bool,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        Self {
            z_min: 0.1,
            z_max: 100.0,
            cull_outside_image: true,
        }
    }
}

impl CaptureConfig {
    pub fn validate(&self) -> Result<(), ProjectionError> {
        if self.z_min > 0.0 && self.z_min < self.z_max {
            Ok(())
        } else {
            Err(ProjectionError::Capture("require 0 < z_min < z_max"))
        }
    }
}

/// Intermediate values of one vertex projection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionRecord {
    pub v_clip: Vector4<f64>,
    pub v_view: Vector4<f64>,
    pub x_ndc: f64,
    pub y_ndc: f64,
    /// View-space depth, positive in front of the camera.
    pub z: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VertexFeature {
    pub u: f64,
    pub v: f64,
    pub id: VertexId,
    pub depth: f64,
}

impl VertexFeature {
    pub fn pixel(&self) -> Vector2<f64> {
        Vector2::new(self.u, self.v)
    }
}

/// One captured frame: id-sorted features plus the ground-truth pose used to render them.
///
/// The ground-truth pose is only reachable through [`FeatureFrame::ground_truth`]; the SLAM
/// pipeline never calls it.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFrame {
    pub frame_id: u64,
    pub timestamp: f64,
    features: Vec<VertexFeature>,
    gt_pose: RigidPose,
}

impl FeatureFrame {
    pub fn new(
        frame_id: u64,
        timestamp: f64,
        features: Vec<VertexFeature>,
        gt_pose: RigidPose,
    ) -> Result<Self, ProjectionError> {
        for w in features.windows(2) {
            if w[1].id <= w[0].id {
                return Err(ProjectionError::UnsortedIds(w[1].id));
            }
        }
        Ok(Self {
            frame_id,
            timestamp,
            features,
            gt_pose,
        })
    }

    pub fn features(&self) -> &[VertexFeature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Evaluation-only access to the pose the frame was captured from.
    pub fn ground_truth(&self) -> &RigidPose {
        &self.gt_pose
    }

    pub fn replace_ground_truth(&mut self, pose: RigidPose) {
        self.gt_pose = pose;
    }

    /// Index of the feature carrying `id`.
    pub fn find(&self, id: VertexId) -> Option<usize> {
        self.features.binary_search_by_key(&id, |f| f.id).ok()
    }

    /// Applies `f` to every pixel position in id order. IDs are never touched.
    pub fn perturb_pixels(&mut self, mut f: impl FnMut(&mut f64, &mut f64)) {
        for feat in &mut self.features {
            f(&mut feat.u, &mut feat.v);
        }
    }
}

/// Symmetric-frustum OpenGL perspective matrix.
pub fn perspective_matrix(intrinsics: &CameraIntrinsics) -> Matrix4<f64> {
    let f = intrinsics.focal_ndc();
    let (n, far) = (intrinsics.near, intrinsics.far);
    let mut p = Matrix4::zeros();
    p[(0, 0)] = f / intrinsics.aspect();
    p[(1, 1)] = f;
    p[(2, 2)] = -(far + n) / (far - n);
    p[(2, 3)] = -2.0 * far * n / (far - n);
    p[(3, 2)] = -1.0;
    p
}

/// Projects one vertex through `P·V·M`, returning `None` when it is culled.
#[allow(clippy::too_many_arguments)]
pub fn project_vertex(
    p: &Vector3<f64>,
    model: &Matrix4<f64>,
    view: &Matrix4<f64>,
    proj: &Matrix4<f64>,
    intrinsics: &CameraIntrinsics,
    cfg: &CaptureConfig,
    id: VertexId,
) -> Option<(VertexFeature, ProjectionRecord)> {
    let model_view = view * model;
    let mvp = proj * model_view;
    project_with(p, &model_view, &mvp, intrinsics, cfg, id)
}

#[inline]
fn project_with(
    p: &Vector3<f64>,
    model_view: &Matrix4<f64>,
    mvp: &Matrix4<f64>,
    intrinsics: &CameraIntrinsics,
    cfg: &CaptureConfig,
    id: VertexId,
) -> Option<(VertexFeature, ProjectionRecord)> {
    let h = p.push(1.0);
    let v_clip = mvp * h;
    let v_view = model_view * h;
    if v_clip.w <= 0.0 {
        return None;
    }
    let z = -v_view.z;
    if z < cfg.z_min || z > cfg.z_max {
        return None;
    }
    let inv_w = 1.0 / v_clip.w;
    let x_ndc = v_clip.x * inv_w;
    let y_ndc = v_clip.y * inv_w;
    let u = (x_ndc * 0.5 + 0.5) * intrinsics.width();
    let v = (-y_ndc * 0.5 + 0.5) * intrinsics.height();
    if cfg.cull_outside_image && !intrinsics.contains(u, v) {
        return None;
    }
    Some((
        VertexFeature { u, v, id, depth: z },
        ProjectionRecord {
            v_clip,
            v_view,
            x_ndc,
            y_ndc,
            z,
        },
    ))
}

/// Inverse pipeline: a pixel and its view-space depth back to a world point
/// (before the model transform is undone).
pub fn back_project(u: f64, v: f64, depth: f64, pose: &RigidPose, intrinsics: &CameraIntrinsics) -> Vector3<f64> {
    let x_ndc = 2.0 * u / intrinsics.width() - 1.0;
    let y_ndc = 1.0 - 2.0 * v / intrinsics.height();
    let f = intrinsics.focal_ndc();
    let view = Vector3::new(
        x_ndc * depth * intrinsics.aspect() / f,
        y_ndc * depth / f,
        -depth,
    );
    pose.transform_point(&view)
}

fn project_into(
    mesh: &MeshModel,
    model_view: &Matrix4<f64>,
    mvp: &Matrix4<f64>,
    intrinsics: &CameraIntrinsics,
    cfg: &CaptureConfig,
    parallel: bool,
    out: &mut Vec<VertexFeature>,
) {
    out.clear();
    let one = |(i, p): (usize, &Vector3<f64>)| {
        project_with(p, model_view, mvp, intrinsics, cfg, VertexId(i as u32)).map(|(f, _)| f)
    };
    #[cfg(feature = "parallel")]
    if parallel && rayon::current_num_threads() > 1 {
        use rayon::prelude::*;
        // par_extend keeps source order, so ids stay sorted.
        out.par_extend(mesh.vertices().par_iter().enumerate().with_min_len(4096).filter_map(one));
        return;
    }
    let _ = parallel;
    out.extend(mesh.vertices().iter().enumerate().filter_map(one));
}

#[allow(clippy::too_many_arguments)]
fn capture_impl(
    frame: &mut FeatureFrame,
    mesh: &MeshModel,
    pose: &RigidPose,
    intrinsics: &CameraIntrinsics,
    cfg: &CaptureConfig,
    frame_id: u64,
    timestamp: f64,
    parallel: bool,
) {
    let model_view = pose.view_matrix() * mesh.model_transform();
    let mvp = perspective_matrix(intrinsics) * model_view;
    project_into(mesh, &model_view, &mvp, intrinsics, cfg, parallel, &mut frame.features);
    frame.frame_id = frame_id;
    frame.timestamp = timestamp;
    frame.gt_pose = *pose;
}

fn empty_frame() -> FeatureFrame {
    FeatureFrame {
        frame_id: 0,
        timestamp: 0.0,
        features: Vec::new(),
        gt_pose: RigidPose::identity(),
    }
}

/// Captures every visible vertex of `mesh` from `pose`. Uses the data-parallel path when
/// the `parallel` feature is enabled; the output is identical either way.
pub fn capture_frame(
    mesh: &MeshModel,
    pose: &RigidPose,
    intrinsics: &CameraIntrinsics,
    cfg: &CaptureConfig,
    frame_id: u64,
    timestamp: f64,
) -> FeatureFrame {
    let mut frame = empty_frame();
    capture_impl(&mut frame, mesh, pose, intrinsics, cfg, frame_id, timestamp, cfg!(feature = "parallel"));
    frame
}

/// [`capture_frame`] into an existing frame, reusing its feature buffer. Every field of
/// `frame` is overwritten.
pub fn capture_frame_into(
    frame: &mut FeatureFrame,
    mesh: &MeshModel,
    pose: &RigidPose,
    intrinsics: &CameraIntrinsics,
    cfg: &CaptureConfig,
    frame_id: u64,
    timestamp: f64,
) {
    capture_impl(frame, mesh, pose, intrinsics, cfg, frame_id, timestamp, cfg!(feature = "parallel"));
}

/// Single-threaded capture, always available for comparison.
pub fn capture_frame_sequential(
    mesh: &MeshModel,
    pose: &RigidPose,
    intrinsics: &CameraIntrinsics,
    cfg: &CaptureConfig,
    frame_id: u64,
    timestamp: f64,
) -> FeatureFrame {
    let mut frame = empty_frame();
    capture_impl(&mut frame, mesh, pose, intrinsics, cfg, frame_id, timestamp, false);
    frame
}
