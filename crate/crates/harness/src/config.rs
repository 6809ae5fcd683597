//! Run configuration: flat `key = value` text with dotted keys.
//!
//! ```text
//! # box room, orbit, 60 fps
//! scene.kind = box_room
//! scene.subdivisions = 16
//! run.fps = 60
//! slam.ba_window = 5
//! ```
//!
//! Later assignments win, so CLI overrides are applied with [`RunConfig::set`] after the
//! file has been read.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use meshslam::{CameraIntrinsics, CaptureConfig, SceneKind, SceneSpec, SlamConfig};

use crate::error::{io_err, HarnessError};
use crate::trajectory::TrajectorySpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    Offline,
    Live,
}

/// Where the ground-truth camera path comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum TrajectorySource {
    Generated(TrajectorySpec),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scene: SceneSpec,
    pub trajectory: TrajectorySource,
    /// Rate at which generated trajectories are sampled before interpolation.
    pub trajectory_hz: f64,
    pub intrinsics: CameraIntrinsics,
    pub capture: CaptureConfig,
    pub slam: SlamConfig,
    pub input_fps: f64,
    pub pixel_noise_sigma: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub mode: RunMode,
    /// `None` picks synchronous mapping offline and asynchronous mapping live.
    pub async_mapping: Option<bool>,
    /// Simulated tracker processing time per frame, in milliseconds. Also slept for real.
    pub tracker_delay_ms: f64,
    /// Add measured tracking time to the simulated timeline (breaks reproducibility).
    pub use_measured_time: bool,
    pub port: u16,
    pub tick_hz: f64,
    pub push_hz: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: SceneSpec::new(SceneKind::BoxRoom {
                width: 4.0,
                height: 3.0,
                depth: 4.0,
                subdivisions: 12,
            }),
            trajectory: TrajectorySource::Generated(TrajectorySpec::default()),
            trajectory_hz: 120.0,
            intrinsics: CameraIntrinsics::default(),
            capture: CaptureConfig::default(),
            slam: SlamConfig::default(),
            input_fps: 30.0,
            pixel_noise_sigma: 0.0,
            duration_s: 20.0,
            seed: 0,
            out_dir: PathBuf::from("out"),
            mode: RunMode::Offline,
            async_mapping: None,
            tracker_delay_ms: 0.0,
            use_measured_time: false,
            port: 8765,
            tick_hz: 72.0,
            push_hz: 30.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| HarnessError::ConfigValue {
        key: key.to_string(),
        msg: format!("`{value}`: {e}"),
    })
}

fn bad(key: &str, msg: impl Into<String>) -> HarnessError {
    HarnessError::ConfigValue {
        key: key.to_string(),
        msg: msg.into(),
    }
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_text(&text)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), HarnessError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(HarnessError::ConfigSyntax {
                    line: i + 1,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            };
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Assigns one dotted key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        match key {
            "scene.kind" => self.set_scene_kind(value)?,
            "scene.path" => match &mut self.scene.kind {
                SceneKind::ObjFile(p) | SceneKind::PlyFile(p) => *p = PathBuf::from(value),
                _ => return Err(bad(key, "set scene.kind to obj or ply first")),
            },
            "scene.seed" => self.scene.seed = parse(key, value)?,
            "scene.width" | "scene.height" | "scene.depth" | "scene.subdivisions" => {
                let SceneKind::BoxRoom {
                    width,
                    height,
                    depth,
                    subdivisions,
                } = &mut self.scene.kind
                else {
                    return Err(bad(key, "only valid for scene.kind = box_room"));
                };
                match key {
                    "scene.width" => *width = parse(key, value)?,
                    "scene.height" => *height = parse(key, value)?,
                    "scene.depth" => *depth = parse(key, value)?,
                    _ => *subdivisions = parse(key, value)?,
                }
            }
            "scene.n" | "scene.spacing" => {
                let SceneKind::Grid { n, spacing } = &mut self.scene.kind else {
                    return Err(bad(key, "only valid for scene.kind = grid"));
                };
                if key == "scene.n" {
                    *n = parse(key, value)?;
                } else {
                    *spacing = parse(key, value)?;
                }
            }
            "scene.count" | "scene.extent" => {
                let SceneKind::SeededPointCloud { count, extent } = &mut self.scene.kind else {
                    return Err(bad(key, "only valid for scene.kind = point_cloud"));
                };
                if key == "scene.count" {
                    *count = parse(key, value)?;
                } else {
                    *extent = parse(key, value)?;
                }
            }

            "trajectory.kind" => {
                self.trajectory = match value {
                    "orbit" => TrajectorySource::Generated(TrajectorySpec::default()),
                    "lissajous" => TrajectorySource::Generated(TrajectorySpec::default_lissajous()),
                    "file" => TrajectorySource::File(PathBuf::new()),
                    _ => return Err(bad(key, format!("unknown trajectory kind `{value}`"))),
                }
            }
            "trajectory.path" => match &mut self.trajectory {
                TrajectorySource::File(p) => *p = PathBuf::from(value),
                _ => return Err(bad(key, "set trajectory.kind = file first")),
            },
            "trajectory.sample_hz" => self.trajectory_hz = parse(key, value)?,
            k if k.starts_with("trajectory.") => match &mut self.trajectory {
                TrajectorySource::Generated(spec) => spec.set(&k["trajectory.".len()..], value)?,
                TrajectorySource::File(_) => return Err(bad(key, "not valid for a trajectory file")),
            },

            "intrinsics.fov_y_deg" => self.intrinsics.fov_y_deg = parse(key, value)?,
            "intrinsics.width" => self.intrinsics.width_px = parse(key, value)?,
            "intrinsics.height" => self.intrinsics.height_px = parse(key, value)?,
            "intrinsics.near" => self.intrinsics.near = parse(key, value)?,
            "intrinsics.far" => self.intrinsics.far = parse(key, value)?,

            "capture.z_min" => self.capture.z_min = parse(key, value)?,
            "capture.z_max" => self.capture.z_max = parse(key, value)?,
            "capture.cull_outside_image" => self.capture.cull_outside_image = parse(key, value)?,

            "slam.min_init_matches" => self.slam.min_init_matches = parse(key, value)?,
            "slam.min_init_parallax_deg" => self.slam.min_init_parallax_deg = parse(key, value)?,
            "slam.min_tracked_points" => self.slam.min_tracked_points = parse(key, value)?,
            "slam.kf_tracked_ratio" => self.slam.kf_tracked_ratio = parse(key, value)?,
            "slam.ba_window" => self.slam.ba_window = parse(key, value)?,
            "slam.min_triangulation_parallax_deg" => self.slam.min_triangulation_parallax_deg = parse(key, value)?,
            "slam.max_reproj_px" => self.slam.max_reproj_px = parse(key, value)?,
            "slam.lm_max_iters" => self.slam.lm.max_iters = parse(key, value)?,

            "run.fps" => self.input_fps = parse(key, value)?,
            "run.noise_sigma" => self.pixel_noise_sigma = parse(key, value)?,
            "run.duration" => self.duration_s = parse(key, value)?,
            "run.seed" => self.seed = parse(key, value)?,
            "run.out_dir" => self.out_dir = PathBuf::from(value),
            "run.mode" => {
                self.mode = match value {
                    "offline" => RunMode::Offline,
                    "live" => RunMode::Live,
                    _ => return Err(bad(key, "expected offline or live")),
                }
            }
            "run.mapping" => {
                self.async_mapping = match value {
                    "sync" => Some(false),
                    "async" => Some(true),
                    "auto" => None,
                    _ => return Err(bad(key, "expected sync, async or auto")),
                }
            }
            "run.tracker_delay_ms" => self.tracker_delay_ms = parse(key, value)?,
            "run.use_measured_time" => self.use_measured_time = parse(key, value)?,
            "live.port" => self.port = parse(key, value)?,
            "live.tick_hz" => self.tick_hz = parse(key, value)?,
            "live.push_hz" => self.push_hz = parse(key, value)?,
            _ => return Err(HarnessError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    fn set_scene_kind(&mut self, value: &str) -> Result<(), HarnessError> {
        self.scene.kind = match value {
            "box_room" => SceneKind::BoxRoom {
                width: 4.0,
                height: 3.0,
                depth: 4.0,
                subdivisions: 12,
            },
            "grid" => SceneKind::Grid { n: 20, spacing: 0.1 },
            "point_cloud" => SceneKind::SeededPointCloud {
                count: 1000,
                extent: 4.0,
            },
            "obj" => SceneKind::ObjFile(PathBuf::new()),
            "ply" => SceneKind::PlyFile(PathBuf::new()),
            _ => return Err(bad("scene.kind", format!("unknown scene kind `{value}`"))),
        };
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(bad(key, "must be positive"))
            }
        };
        positive("run.fps", self.input_fps)?;
        positive("trajectory.sample_hz", self.trajectory_hz)?;
        positive("live.tick_hz", self.tick_hz)?;
        positive("live.push_hz", self.push_hz)?;
        if !(self.pixel_noise_sigma >= 0.0 && self.pixel_noise_sigma.is_finite()) {
            return Err(bad("run.noise_sigma", "must be ≥ 0"));
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return Err(bad("run.duration", "must be ≥ 0"));
        }
        if !(self.tracker_delay_ms >= 0.0 && self.tracker_delay_ms.is_finite()) {
            return Err(bad("run.tracker_delay_ms", "must be ≥ 0"));
        }
        self.intrinsics.validate()?;
        self.capture.validate()?;
        self.slam.validate().map_err(|msg| bad("slam", msg))?;
        if let TrajectorySource::Generated(spec) = &self.trajectory {
            spec.validate()?;
        }
        Ok(())
    }

    /// The configuration as text that [`RunConfig::from_text`] reads back to an equal value.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        match &self.scene.kind {
            SceneKind::ObjFile(p) | SceneKind::PlyFile(p) => {
                let kind = if matches!(self.scene.kind, SceneKind::ObjFile(_)) { "obj" } else { "ply" };
                kv("scene.kind", kind.into());
                kv("scene.path", p.display().to_string());
            }
            SceneKind::Grid { n, spacing } => {
                kv("scene.kind", "grid".into());
                kv("scene.n", n.to_string());
                kv("scene.spacing", format!("{spacing:?}"));
            }
            SceneKind::BoxRoom {
                width,
                height,
                depth,
                subdivisions,
            } => {
                kv("scene.kind", "box_room".into());
                kv("scene.width", format!("{width:?}"));
                kv("scene.height", format!("{height:?}"));
                kv("scene.depth", format!("{depth:?}"));
                kv("scene.subdivisions", subdivisions.to_string());
            }
            SceneKind::SeededPointCloud { count, extent } => {
                kv("scene.kind", "point_cloud".into());
                kv("scene.count", count.to_string());
                kv("scene.extent", format!("{extent:?}"));
            }
        }
        kv("scene.seed", self.scene.seed.to_string());
        match &self.trajectory {
            TrajectorySource::File(p) => {
                kv("trajectory.kind", "file".into());
                kv("trajectory.path", p.display().to_string());
            }
            TrajectorySource::Generated(spec) => {
                for (k, v) in spec.entries() {
                    kv(&format!("trajectory.{k}"), v);
                }
            }
        }
        kv("trajectory.sample_hz", format!("{:?}", self.trajectory_hz));
        let k = &self.intrinsics;
        kv("intrinsics.fov_y_deg", format!("{:?}", k.fov_y_deg));
        kv("intrinsics.width", k.width_px.to_string());
        kv("intrinsics.height", k.height_px.to_string());
        kv("intrinsics.near", format!("{:?}", k.near));
        kv("intrinsics.far", format!("{:?}", k.far));
        kv("capture.z_min", format!("{:?}", self.capture.z_min));
        kv("capture.z_max", format!("{:?}", self.capture.z_max));
        kv("capture.cull_outside_image", self.capture.cull_outside_image.to_string());
        let s = &self.slam;
        kv("slam.min_init_matches", s.min_init_matches.to_string());
        kv("slam.min_init_parallax_deg", format!("{:?}", s.min_init_parallax_deg));
        kv("slam.min_tracked_points", s.min_tracked_points.to_string());
        kv("slam.kf_tracked_ratio", format!("{:?}", s.kf_tracked_ratio));
        kv("slam.ba_window", s.ba_window.to_string());
        kv("slam.min_triangulation_parallax_deg", format!("{:?}", s.min_triangulation_parallax_deg));
        kv("slam.max_reproj_px", format!("{:?}", s.max_reproj_px));
        kv("slam.lm_max_iters", s.lm.max_iters.to_string());
        kv("run.fps", format!("{:?}", self.input_fps));
        kv("run.noise_sigma", format!("{:?}", self.pixel_noise_sigma));
        kv("run.duration", format!("{:?}", self.duration_s));
        kv("run.seed", self.seed.to_string());
        kv("run.out_dir", self.out_dir.display().to_string());
        kv(
            "run.mode",
            match self.mode {
                RunMode::Offline => "offline",
                RunMode::Live => "live",
            }
            .into(),
        );
        kv(
            "run.mapping",
            match self.async_mapping {
                None => "auto",
                Some(true) => "async",
                Some(false) => "sync",
            }
            .into(),
        );
        kv("run.tracker_delay_ms", format!("{:?}", self.tracker_delay_ms));
        kv("run.use_measured_time", self.use_measured_time.to_string());
        kv("live.port", self.port.to_string());
        kv("live.tick_hz", format!("{:?}", self.tick_hz));
        kv("live.push_hz", format!("{:?}", self.push_hz));
        out
    }
}
