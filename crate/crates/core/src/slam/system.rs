//! Tracking front-end plus a dedicated mapping thread.
//!
//! `SlamSystem` lives in the tracking context and owns the tracker state. Keyframes travel
//! to the mapping thread through a bounded queue; a full queue blocks tracking. The map is
//! shared behind a reader/writer lock: tracking takes short read locks, mapping writes in
//! two short critical sections (insertion + triangulation, then the BA commit) and solves
//! the window under a read lock in between.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};
use std::thread::{self, JoinHandle};

use crossbeam_channel::{bounded, unbounded, Receiver, Sender};
use log::{debug, warn};

use super::init::{initialize_two_view, InitRejection};
use super::map::{KeyFrameId, SlamMap};
use super::mapping::{triangulate_new_keyframe, MappingReport};
use super::tracking::{need_keyframe, track_frame};
use super::{SlamConfig, SlamError, TrackerMode, TrackerState};
use crate::optimize::WindowOutcome;
use crate::pose::RigidPose;
use crate::projection::{CameraIntrinsics, FeatureFrame};

pub type SharedMap = Arc<RwLock<SlamMap>>;

/// Keyframe queue depth between tracking and mapping.
pub const KEYFRAME_QUEUE_CAPACITY: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MappingMode {
    /// Tracking waits for each keyframe to be mapped before the next frame. Reproducible.
    Synchronous,
    /// Tracking continues while mapping works through its queue.
    Asynchronous,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameOutcome {
    pub frame_id: u64,
    pub timestamp: f64,
    pub mode: TrackerMode,
    /// Estimated camera-to-world pose in the map gauge, when tracked.
    pub pose: Option<RigidPose>,
    pub n_features: usize,
    pub n_matched: usize,
    pub n_tracked: usize,
    pub keyframe: Option<KeyFrameId>,
    pub lost: bool,
    /// Set on the frame that initialized the map: timestamp and pose of the first view.
    pub initialized_from: Option<(u64, f64, RigidPose)>,
}

struct MappingJob {
    id: KeyFrameId,
    frame: FeatureFrame,
    pose: RigidPose,
}

pub struct SlamSystem {
    intrinsics: CameraIntrinsics,
    cfg: SlamConfig,
    mode: MappingMode,
    map: SharedMap,
    state: TrackerState,
    init_reference: Option<FeatureFrame>,
    next_kf: u64,
    jobs: Option<Sender<MappingJob>>,
    done: Receiver<Result<MappingReport, SlamError>>,
    pending: Arc<AtomicUsize>,
    worker: Option<JoinHandle<()>>,
    reports: Vec<MappingReport>,
}

impl SlamSystem {
    pub fn new(intrinsics: CameraIntrinsics, cfg: SlamConfig, mode: MappingMode) -> Self {
        let map: SharedMap = Arc::new(RwLock::new(SlamMap::new()));
        let (job_tx, job_rx) = bounded::<MappingJob>(KEYFRAME_QUEUE_CAPACITY);
        let (done_tx, done_rx) = unbounded();
        let pending = Arc::new(AtomicUsize::new(0));
        let worker = {
            let map = Arc::clone(&map);
            let pending = Arc::clone(&pending);
            thread::Builder::new()
                .name("mapping".into())
                .spawn(move || mapping_loop(job_rx, done_tx, map, pending, cfg, intrinsics))
                .expect("spawn mapping thread")
        };
        Self {
            intrinsics,
            cfg,
            mode,
            map,
            state: TrackerState::default(),
            init_reference: None,
            next_kf: 0,
            jobs: Some(job_tx),
            done: done_rx,
            pending,
            worker: Some(worker),
            reports: Vec::new(),
        }
    }

    pub fn map(&self) -> SharedMap {
        Arc::clone(&self.map)
    }

    pub fn state(&self) -> &TrackerState {
        &self.state
    }

    pub fn config(&self) -> &SlamConfig {
        &self.cfg
    }

    /// Keyframes queued for or being processed by mapping.
    pub fn pending_keyframes(&self) -> usize {
        self.pending.load(Ordering::Acquire)
    }

    /// Mapping reports received so far (drained from the mapping thread).
    pub fn mapping_reports(&mut self) -> &[MappingReport] {
        self.collect_reports();
        &self.reports
    }

    fn collect_reports(&mut self) {
        while let Ok(r) = self.done.try_recv() {
            match r {
                Ok(rep) => self.reports.push(rep),
                Err(e) => warn!("mapping failed: {e}"),
            }
        }
    }

    /// Blocks until the mapping queue is empty.
    pub fn wait_for_mapping(&mut self) {
        while self.pending.load(Ordering::Acquire) > 0 {
            match self.done.recv() {
                Ok(Ok(rep)) => self.reports.push(rep),
                Ok(Err(e)) => warn!("mapping failed: {e}"),
                Err(_) => break,
            }
        }
        self.collect_reports();
    }

    /// Runs one frame through initialization or tracking.
    pub fn process(&mut self, frame: FeatureFrame) -> FrameOutcome {
        let mut out = FrameOutcome {
            frame_id: frame.frame_id,
            timestamp: frame.timestamp,
            mode: self.state.mode,
            pose: None,
            n_features: frame.len(),
            n_matched: 0,
            n_tracked: 0,
            keyframe: None,
            lost: false,
            initialized_from: None,
        };
        match self.state.mode {
            TrackerMode::Uninitialized => self.initialize(frame, &mut out),
            TrackerMode::Lost => out.lost = true,
            TrackerMode::Tracking => self.track(frame, &mut out),
        }
        out.mode = self.state.mode;
        out
    }

    fn initialize(&mut self, frame: FeatureFrame, out: &mut FrameOutcome) {
        let Some(reference) = self.init_reference.take() else {
            self.init_reference = Some(frame);
            return;
        };
        match initialize_two_view(&reference, &frame, &self.intrinsics, &self.cfg) {
            Ok((map, state)) => {
                debug!(
                    "initialized from frames {} and {} with {} points",
                    reference.frame_id,
                    frame.frame_id,
                    map.num_points()
                );
                {
                    let mut guard = self.map.write().expect("map lock");
                    // Keep versions monotone across re-initialization.
                    let base = guard.version();
                    *guard = map;
                    guard.advance_version_past(base);
                }
                out.pose = Some(state.last_pose);
                out.n_matched = state.last_keyframe_points;
                out.n_tracked = state.last_keyframe_points;
                out.keyframe = Some(KeyFrameId(1));
                out.initialized_from = Some((reference.frame_id, reference.timestamp, RigidPose::identity()));
                self.state = state;
                self.next_kf = 2;
            }
            Err(InitRejection::TooFewMatches) => self.init_reference = Some(frame),
            Err(_) => self.init_reference = Some(reference),
        }
    }

    fn track(&mut self, frame: FeatureFrame, out: &mut FrameOutcome) {
        let (result, wants_kf) = {
            let map = self.map.read().expect("map lock");
            let result = track_frame(&frame, &map, &mut self.state, &self.intrinsics, &self.cfg)
                .expect("tracker is initialized");
            let wants = need_keyframe(&result, &map, &self.state, &self.cfg);
            (result, wants)
        };
        out.n_matched = result.n_matched;
        out.n_tracked = result.n_tracked;
        out.lost = result.lost;
        if result.lost {
            return;
        }
        out.pose = Some(result.pose);
        if wants_kf {
            let id = KeyFrameId(self.next_kf);
            self.next_kf += 1;
            self.state.last_keyframe = id;
            self.state.last_keyframe_pose = result.pose;
            self.state.last_keyframe_points = result.n_tracked;
            out.keyframe = Some(id);
            self.pending.fetch_add(1, Ordering::AcqRel);
            let job = MappingJob {
                id,
                frame,
                pose: result.pose,
            };
            if self.jobs.as_ref().expect("running").send(job).is_err() {
                warn!("mapping thread is gone");
                self.pending.fetch_sub(1, Ordering::AcqRel);
            }
            if self.mode == MappingMode::Synchronous {
                self.wait_for_mapping();
            }
        }
        self.collect_reports();
    }

    /// Stops the mapping thread after it drains its queue.
    pub fn shutdown(&mut self) {
        self.jobs.take();
        if let Some(h) = self.worker.take() {
            let _ = h.join();
        }
        self.collect_reports();
    }
}

impl Drop for SlamSystem {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn mapping_loop(
    jobs: Receiver<MappingJob>,
    done: Sender<Result<MappingReport, SlamError>>,
    map: SharedMap,
    pending: Arc<AtomicUsize>,
    cfg: SlamConfig,
    intrinsics: CameraIntrinsics,
) {
    for job in jobs {
        let result = (|| {
            let mut report = {
                let mut guard = map.write().expect("map lock");
                triangulate_new_keyframe(job.id, job.frame, job.pose, &mut guard, &cfg, &intrinsics)?
            };
            // Only this thread writes, so the window read here is still current at commit.
            let outcome = {
                let guard = map.read().expect("map lock");
                WindowOutcome::compute(&guard, cfg.ba_window, &intrinsics, &cfg.lm)
            };
            outcome.commit(&mut map.write().expect("map lock"))?;
            report.ba = Some(outcome.report);
            Ok(report)
        })();
        pending.fetch_sub(1, Ordering::AcqRel);
        if done.send(result).is_err() {
            break;
        }
    }
}
